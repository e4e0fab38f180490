//! SpecAugment-style waveform augmentation via a log-mel round trip.
//!
//! The clip is transformed to a log mel spectrogram, warped and masked
//! there, mapped back to a linear magnitude spectrogram through the
//! min-norm mel pseudo-inverse (clamped at zero), and reconstructed with
//! Griffin-Lim iterations seeded from the original phase.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{AudioClip, CLIP_SAMPLES};
use crate::error::{Error, Result};

/// Parameters of the augmentation chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub n_mels: usize,
    pub fft_size: usize,
    pub mel_hop: usize,
    pub n_freq_masks: usize,
    pub freq_mask_max: usize,
    pub n_time_masks: usize,
    pub time_mask_max: usize,
    pub time_warp_max: usize,
    pub griffin_lim_iters: usize,
    pub rng_seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            n_mels: 80,
            fft_size: 512,
            mel_hop: 160,
            n_freq_masks: 2,
            freq_mask_max: 15,
            n_time_masks: 2,
            time_mask_max: 100,
            time_warp_max: 40,
            griffin_lim_iters: 32,
            rng_seed: 0,
        }
    }
}

/// Centered STFT/iSTFT with a periodic Hann window.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let window = (0..n_fft)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos())
            .collect();
        Self {
            n_fft,
            hop,
            window,
            fft: planner.plan_fft_forward(n_fft),
            ifft: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn reflect_pad(&self, x: &[f64]) -> Vec<f64> {
        let half = self.n_fft / 2;
        let n = x.len();
        let mut out = Vec::with_capacity(n + 2 * half);
        for i in (1..=half).rev() {
            out.push(x[i.min(n - 1)]);
        }
        out.extend_from_slice(x);
        for i in 0..half {
            out.push(x[n - 2 - i.min(n - 2)]);
        }
        out
    }

    /// Complex spectrogram, bins x frames.
    pub fn forward(&self, x: &[f64]) -> Array2<Complex64> {
        let padded = self.reflect_pad(x);
        let n_frames = 1 + (padded.len() - self.n_fft) / self.hop;
        let mut out = Array2::from_elem((self.n_bins(), n_frames), Complex64::new(0.0, 0.0));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for m in 0..n_frames {
            let start = m * self.hop;
            for i in 0..self.n_fft {
                buf[i] = Complex64::new(padded[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for b in 0..self.n_bins() {
                out[[b, m]] = buf[b];
            }
        }
        out
    }

    /// Weighted overlap-add inverse, trimmed to `out_len` samples.
    pub fn inverse(&self, spec: &Array2<Complex64>, out_len: usize) -> Vec<f64> {
        let n_frames = spec.ncols();
        let total = self.n_fft + (n_frames - 1) * self.hop;
        let mut acc = vec![0.0; total];
        let mut wsum = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let scale = 1.0 / self.n_fft as f64;
        for m in 0..n_frames {
            for b in 0..self.n_bins() {
                buf[b] = spec[[b, m]];
            }
            // negative frequencies by conjugate symmetry
            for b in self.n_bins()..self.n_fft {
                buf[b] = spec[[self.n_fft - b, m]].conj();
            }
            self.ifft.process(&mut buf);
            let start = m * self.hop;
            for i in 0..self.n_fft {
                let v = buf[i].re * scale;
                acc[start + i] += v * self.window[i];
                wsum[start + i] += self.window[i] * self.window[i];
            }
        }
        let half = self.n_fft / 2;
        (0..out_len)
            .map(|i| {
                let j = i + half;
                if j < total && wsum[j] > 1e-12 {
                    acc[j] / wsum[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels` x `n_bins`, spanning 0..fs/2.
pub fn mel_basis(n_mels: usize, n_fft: usize, fs: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let m_max = hz_to_mel(fs / 2.0);
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut basis = Array2::zeros((n_mels, n_bins));
    for i in 0..n_mels {
        let (lo, c, hi) = (pts[i], pts[i + 1], pts[i + 2]);
        for b in 0..n_bins {
            let f = b as f64 * fs / n_fft as f64;
            let up = (f - lo) / (c - lo);
            let down = (hi - f) / (hi - c);
            basis[[i, b]] = up.min(down).max(0.0);
        }
    }
    basis
}

/// Solves A X = B for symmetric positive definite A via Cholesky.
fn spd_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(
                        "mel Gram matrix is not positive definite".into(),
                    ));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    let cols = b.ncols();
    let mut x = b.clone();
    for c in 0..cols {
        // forward substitution: L y = b
        for i in 0..n {
            let mut v = x[[i, c]];
            for k in 0..i {
                v -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
        // back substitution: L^T x = y
        for i in (0..n).rev() {
            let mut v = x[[i, c]];
            for k in i + 1..n {
                v -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
    }
    Ok(x)
}

/// Min-norm right inverse B^T (B B^T + lambda I)^-1 of the mel basis.
///
/// Narrow low-frequency triangles can land on single FFT bins, which makes
/// the Gram matrix rank-deficient; a small ridge keeps the factorization
/// well-posed while leaving realizable mel vectors essentially untouched.
pub fn mel_pseudo_inverse(basis: &Array2<f64>) -> Result<Array2<f64>> {
    let mut gram = basis.dot(&basis.t());
    let n = gram.nrows();
    let ridge = 1e-8 * gram.diag().sum() / n as f64;
    for i in 0..n {
        gram[[i, i]] += ridge;
    }
    let eye = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 });
    let gram_inv = spd_solve(&gram, &eye)?;
    Ok(basis.t().dot(&gram_inv))
}

/// Piecewise-linear warp of the frame axis around a random anchor.
fn time_warp(logmel: &Array2<f64>, max_disp: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let t = logmel.ncols();
    if max_disp == 0 || t < 2 * max_disp + 2 {
        return logmel.clone();
    }
    let anchor = rng.random_range(max_disp..t - max_disp) as f64;
    let disp = rng.random_range(-(max_disp as i64)..=max_disp as i64) as f64;
    if disp == 0.0 {
        return logmel.clone();
    }
    let warped_anchor = anchor + disp;
    let last = (t - 1) as f64;
    let mut out = Array2::zeros(logmel.raw_dim());
    for tgt in 0..t {
        let x = tgt as f64;
        // inverse map: where does output column x sample the input?
        let src = if x <= warped_anchor {
            x * anchor / warped_anchor
        } else {
            anchor + (x - warped_anchor) * (last - anchor) / (last - warped_anchor)
        };
        let s0 = src.floor().clamp(0.0, last) as usize;
        let s1 = (s0 + 1).min(t - 1);
        let frac = (src - s0 as f64).clamp(0.0, 1.0);
        for r in 0..logmel.nrows() {
            out[[r, tgt]] = logmel[[r, s0]] * (1.0 - frac) + logmel[[r, s1]] * frac;
        }
    }
    out
}

/// Applies warp and masks to a log-mel spectrogram. Mask fill value is the
/// per-spectrogram mean taken after warping.
pub fn augment_log_mel(
    logmel: &Array2<f64>,
    params: &AugmentParams,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let (n_mels, n_frames) = (logmel.nrows(), logmel.ncols());
    if params.freq_mask_max >= n_mels {
        return Err(Error::parameter(format!(
            "freq mask {} too wide for {} mel bins",
            params.freq_mask_max, n_mels
        )));
    }
    if params.time_mask_max >= n_frames {
        return Err(Error::parameter(format!(
            "time mask {} too wide for {} frames",
            params.time_mask_max, n_frames
        )));
    }
    let mut out = time_warp(logmel, params.time_warp_max, rng);
    let fill = out.mean().unwrap_or(0.0);
    for _ in 0..params.n_freq_masks {
        let width = rng.random_range(0..=params.freq_mask_max);
        if width == 0 {
            continue;
        }
        let start = rng.random_range(0..=n_mels - width);
        for r in start..start + width {
            out.row_mut(r).fill(fill);
        }
    }
    for _ in 0..params.n_time_masks {
        let width = rng.random_range(0..=params.time_mask_max);
        if width == 0 {
            continue;
        }
        let start = rng.random_range(0..=n_frames - width);
        for c in start..start + width {
            out.column_mut(c).fill(fill);
        }
    }
    Ok(out)
}

/// Full augmentation: clip -> log mel -> warp/mask -> magnitude estimate ->
/// Griffin-Lim seeded with the original phase -> clip.
pub fn specaugment(clip: &AudioClip, params: &AugmentParams) -> Result<AudioClip> {
    if clip.len() != CLIP_SAMPLES {
        return Err(Error::parameter(format!(
            "expected a standardized {CLIP_SAMPLES}-sample clip, got {}",
            clip.len()
        )));
    }
    let stft = Stft::new(params.fft_size, params.mel_hop);
    let spec = stft.forward(&clip.samples);
    let mag = spec.mapv(|c| c.norm());
    let phase = spec.mapv(|c| c.arg());

    let basis = mel_basis(params.n_mels, params.fft_size, clip.sample_rate as f64);
    let logmel = basis.dot(&mag).mapv(|v| v.max(1e-10).ln());

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let augmented = augment_log_mel(&logmel, params, &mut rng)?;

    let pinv = mel_pseudo_inverse(&basis)?;
    let mag_est = pinv.dot(&augmented.mapv(f64::exp)).mapv(|v| v.max(0.0));

    // Griffin-Lim refinements from the original phase.
    let mut phase = phase;
    let to_complex = |m: &Array2<f64>, p: &Array2<f64>| {
        let mut s = Array2::from_elem(m.raw_dim(), Complex64::new(0.0, 0.0));
        ndarray::Zip::from(&mut s).and(m).and(p).for_each(|s, &m, &p| {
            *s = Complex64::from_polar(m, p);
        });
        s
    };
    for _ in 0..params.griffin_lim_iters {
        let y = stft.inverse(&to_complex(&mag_est, &phase), CLIP_SAMPLES);
        phase = stft.forward(&y).mapv(|c| c.arg());
    }
    let y = stft.inverse(&to_complex(&mag_est, &phase), CLIP_SAMPLES);
    Ok(AudioClip::new(y, clip.sample_rate).standardized_length(CLIP_SAMPLES))
}

/// Log-mel of a clip with this module's STFT conventions. Exposed for the
/// augmentation tests and diagnostics.
pub fn log_mel_spectrogram(clip: &AudioClip, params: &AugmentParams) -> Array2<f64> {
    let stft = Stft::new(params.fft_size, params.mel_hop);
    let mag = stft.forward(&clip.samples).mapv(|c| c.norm());
    let basis = mel_basis(params.n_mels, params.fft_size, clip.sample_rate as f64);
    basis.dot(&mag).mapv(|v| v.max(1e-10).ln())
}
