//! Mono audio buffers and WAV file access.
//!
//! Every pipeline signal is a single-channel sample buffer at 16 kHz,
//! standardized to 4 seconds (64000 samples) before featurization.

use std::path::Path;

use crate::error::{Error, Result};

/// Pipeline sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Standardized clip length: 4 seconds at 16 kHz.
pub const CLIP_SAMPLES: usize = 64_000;

/// A mono audio buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square of the samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Truncates or zero-pads on the right to exactly `len` samples.
    pub fn standardized_length(&self, len: usize) -> AudioClip {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        AudioClip::new(samples, self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    /// Scales so that the absolute peak equals `target`. Silent clips pass
    /// through unchanged.
    pub fn peak_normalized(&self, target: f64) -> AudioClip {
        let peak = self.peak();
        if peak <= 0.0 {
            return self.clone();
        }
        self.scaled(target / peak)
    }

    /// Reads a mono WAV file (float32 or PCM16).
    pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
        let reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::format(format!(
                "{}: expected mono, got {} channels",
                path.as_ref().display(),
                spec.channels
            )));
        }
        let samples: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .into_samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f64 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        Ok(AudioClip::new(samples, spec.sample_rate))
    }

    /// Writes a mono float32 WAV file.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for &s in &self.samples {
            writer.write_sample(s as f32)?;
        }
        writer.finalize()?;
        Ok(())
    }
}
