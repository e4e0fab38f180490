//! Gammatone + phase featurization: audio clip -> 30x1997 feature block.
//!
//! Rows 0..19 hold per-band log envelope RMS, rows 20..24 the phase of the
//! five lowest bands, rows 25..29 the wrapped first-order phase difference
//! along the band axis.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::gammatone::GammatoneBank;

/// Number of gammatone bands.
pub const N_BANDS: usize = 20;
/// Lowest band center in Hz.
pub const FMIN_HZ: f64 = 50.0;
/// Highest band center in Hz.
pub const FMAX_HZ: f64 = 2000.0;
/// Number of low bands kept for the phase rows.
pub const N_PHASE_BANDS: usize = 5;
/// Total feature rows: 20 magnitude + 5 phase + 5 phase derivative.
pub const FEATURE_ROWS: usize = 30;
/// Standardized number of frames.
pub const TARGET_FRAMES: usize = 1997;
/// Analysis window length in samples.
pub const WINDOW: usize = 64;
/// Analysis hop in samples.
pub const HOP: usize = 32;
/// Floor applied to the envelope RMS before the log.
pub const LOG_FLOOR: f64 = 1e-10;

const RVFB_MAGIC: &[u8; 4] = b"RVFB";

/// Wraps an angle to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Per-row standardization statistics for the magnitude rows, computed once
/// over the training split and stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RowStats {
    pub fn identity(rows: usize) -> Self {
        Self {
            mean: vec![0.0; rows],
            std: vec![1.0; rows],
        }
    }
}

/// An F x T real feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub data: Array2<f64>,
}

impl FeatureBlock {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    /// Writes the block in RVFB format: magic, u32 LE rows, u32 LE frames,
    /// then rows*frames float32 LE values in row-major order.
    pub fn write_rvfb(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf =
            Vec::with_capacity(12 + self.rows() * self.frames() * 4);
        buf.extend_from_slice(RVFB_MAGIC);
        buf.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        for &v in self.data.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path.as_ref())?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_rvfb(path: impl AsRef<Path>) -> Result<FeatureBlock> {
        let mut f = std::fs::File::open(path.as_ref())?;
        let mut head = [0u8; 12];
        f.read_exact(&mut head)
            .map_err(|_| Error::format(format!("{}: truncated RVFB header", path.as_ref().display())))?;
        if &head[0..4] != RVFB_MAGIC {
            return Err(Error::format(format!(
                "{}: bad RVFB magic",
                path.as_ref().display()
            )));
        }
        let rows = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let frames = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if rows == 0 || frames == 0 || rows.saturating_mul(frames) > (1 << 28) {
            return Err(Error::format(format!(
                "{}: implausible RVFB dimensions {rows}x{frames}",
                path.as_ref().display()
            )));
        }
        let mut body = vec![0u8; rows * frames * 4];
        f.read_exact(&mut body)
            .map_err(|_| Error::format(format!("{}: truncated RVFB body", path.as_ref().display())))?;
        let values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let data = Array2::from_shape_vec((rows, frames), values)
            .map_err(|e| Error::format(format!("RVFB shape: {e}")))?;
        Ok(FeatureBlock { data })
    }
}

/// Runs the bank over a clip and frames the complex band outputs.
///
/// Per band and frame: the magnitude entry is the log of the Hann-weighted
/// envelope RMS within the window (floored at [`LOG_FLOOR`]); the phase
/// entry is the argument of the complex band output at the frame center.
pub fn analyze_clip(
    clip: &AudioClip,
    bank: &GammatoneBank,
    window: usize,
    hop: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if window == 0 || hop == 0 {
        return Err(Error::parameter("window and hop must be positive"));
    }
    let n = clip.len();
    if n < window {
        return Err(Error::parameter(format!(
            "clip length {n} shorter than one window ({window})"
        )));
    }
    let t_raw = (n - window) / hop + 1;
    let bands = bank.n_bands();
    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / window as f64).cos())
        .collect();
    let wsum: f64 = hann.iter().sum();

    let mut mag = Array2::zeros((bands, t_raw));
    let mut phase = Array2::zeros((bands, t_raw));
    for b in 0..bands {
        let y = bank.filter_band(b, &clip.samples);
        for t in 0..t_raw {
            let start = t * hop;
            let mut acc = 0.0;
            for (i, w) in hann.iter().enumerate() {
                acc += w * y[start + i].norm_sqr();
            }
            let rms = (acc / wsum).sqrt();
            mag[[b, t]] = rms.max(LOG_FLOOR).ln();
            let c = y[start + window / 2];
            phase[[b, t]] = wrap_phase(c.im.atan2(c.re));
        }
    }
    Ok((mag, phase))
}

/// Truncates the phase matrix to the `n_low` lowest bands and computes the
/// wrapped first-order difference along the band axis.
pub fn phase_features(
    phase: &Array2<f64>,
    n_low: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if n_low + 1 > phase.nrows() {
        return Err(Error::parameter(format!(
            "need {} phase bands, have {}",
            n_low + 1,
            phase.nrows()
        )));
    }
    let t = phase.ncols();
    let phase_low = phase.slice(s![0..n_low, ..]).to_owned();
    let mut dphase = Array2::zeros((n_low, t));
    for b in 0..n_low {
        for j in 0..t {
            dphase[[b, j]] = wrap_phase(phase[[b + 1, j]] - phase[[b, j]]);
        }
    }
    Ok((phase_low, dphase))
}

/// Stacks magnitude, phase and phase-derivative rows, standardizes the time
/// axis to `t_target` frames (truncate right / zero-pad right), and applies
/// the optional per-row magnitude standardization.
pub fn assemble_feature_block(
    mag: &Array2<f64>,
    phase_low: &Array2<f64>,
    dphase: &Array2<f64>,
    t_target: usize,
    stats: Option<&RowStats>,
) -> Result<FeatureBlock> {
    let t_raw = mag.ncols();
    if phase_low.ncols() != t_raw || dphase.ncols() != t_raw {
        return Err(Error::parameter(format!(
            "frame counts differ: mag {} phase {} dphase {}",
            t_raw,
            phase_low.ncols(),
            dphase.ncols()
        )));
    }
    let rows = mag.nrows() + phase_low.nrows() + dphase.nrows();
    let mut data = Array2::zeros((rows, t_target));
    let t_copy = t_raw.min(t_target);
    for (dst, src) in [
        (0, mag),
        (mag.nrows(), phase_low),
        (mag.nrows() + phase_low.nrows(), dphase),
    ] {
        data.slice_mut(s![dst..dst + src.nrows(), 0..t_copy])
            .assign(&src.slice(s![.., 0..t_copy]));
    }
    let mut block = FeatureBlock { data };
    if let Some(st) = stats {
        apply_row_standardization(&mut block, st)?;
    }
    if !block.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite feature value".into()));
    }
    Ok(block)
}

/// Applies `(x - mean) / std` to the first `stats.mean.len()` rows.
pub fn apply_row_standardization(block: &mut FeatureBlock, stats: &RowStats) -> Result<()> {
    if stats.mean.len() != stats.std.len() || stats.mean.len() > block.rows() {
        return Err(Error::parameter(format!(
            "standardization rows {} incompatible with block rows {}",
            stats.mean.len(),
            block.rows()
        )));
    }
    for (r, (&m, &s)) in stats.mean.iter().zip(stats.std.iter()).enumerate() {
        let denom = if s > 1e-12 { s } else { 1.0 };
        block
            .data
            .row_mut(r)
            .mapv_inplace(|v| (v - m) / denom);
    }
    Ok(())
}

/// Full featurization chain with the standard window, hop, band layout and
/// frame count.
pub fn featurize_clip(
    clip: &AudioClip,
    bank: &GammatoneBank,
    stats: Option<&RowStats>,
) -> Result<FeatureBlock> {
    let (mag, phase) = analyze_clip(clip, bank, WINDOW, HOP)?;
    let (phase_low, dphase) = phase_features(&phase, N_PHASE_BANDS)?;
    assemble_feature_block(&mag, &phase_low, &dphase, TARGET_FRAMES, stats)
}
