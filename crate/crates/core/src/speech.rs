//! Deterministic synthetic speech-like signals.
//!
//! Glottal pulse trains with slow pitch modulation, three formant
//! resonators and a syllabic amplitude envelope. Not meant to sound like a
//! person; meant to carry speech-shaped spectro-temporal structure so the
//! pipeline runs with zero external assets.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;

/// Standard normal draw via Box-Muller.
pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Two-pole resonator applied in place; gain scaled by (1 - r).
fn resonate(x: &[f64], fc: f64, bw: f64, fs: f64) -> Vec<f64> {
    let r = (-std::f64::consts::PI * bw / fs).exp();
    let theta = 2.0 * std::f64::consts::PI * fc / fs;
    let a1 = -2.0 * r * theta.cos();
    let a2 = r * r;
    let mut y = vec![0.0; x.len()];
    let (mut y1, mut y2) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let y0 = v - a1 * y1 - a2 * y2;
        y[i] = y0;
        y2 = y1;
        y1 = y0;
    }
    let g = 1.0 - r;
    y.iter_mut().for_each(|v| *v *= g);
    y
}

/// Generates `n_samples` of deterministic speech-like audio at `fs`.
pub fn synth_speech(seed: u64, n_samples: usize, fs: u32) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fsf = fs as f64;
    let f0_base = rng.random_range(90.0..180.0);
    let vib_rate = rng.random_range(0.4..1.1);
    let vib_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let trem_rate = rng.random_range(1.8..2.9);
    let syll_rate = rng.random_range(2.2..3.4);
    let syll_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let formants = [
        (rng.random_range(350.0..750.0), 90.0, 0.8),
        (rng.random_range(1000.0..1900.0), 120.0, 0.5),
        (rng.random_range(2300.0..3000.0), 160.0, 0.25),
    ];

    // glottal pulse train with drifting pitch and spectral tilt
    let mut excitation = vec![0.0; n_samples];
    let mut cycle = 0.0;
    let mut tilt = 0.0;
    for (i, e) in excitation.iter_mut().enumerate() {
        let t = i as f64 / fsf;
        let f0 = f0_base
            * (1.0
                + 0.08 * (2.0 * std::f64::consts::PI * vib_rate * t + vib_phase).sin()
                + 0.03 * (2.0 * std::f64::consts::PI * trem_rate * t).sin());
        cycle += f0 / fsf;
        let frac = cycle - cycle.floor();
        let pulse = (-80.0 * frac).exp();
        // mild one-pole lowpass models the glottal-flow rolloff
        tilt = 0.55 * tilt + 0.45 * pulse;
        *e = tilt;
    }

    let mut voiced = vec![0.0; n_samples];
    for &(fc, bw, gain) in &formants {
        let band = resonate(&excitation, fc, bw, fsf);
        for (v, b) in voiced.iter_mut().zip(band.iter()) {
            *v += gain * b;
        }
    }

    let mut samples = vec![0.0; n_samples];
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / fsf;
        let env = 0.35
            + 0.65 * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * syll_rate * t + syll_phase).sin());
        *s = voiced[i] * env + 0.0005 * gauss(&mut rng);
    }

    // DC blocker, as a recording chain would apply
    let mut prev_x = 0.0;
    let mut prev_y = 0.0;
    for s in samples.iter_mut() {
        let x = *s;
        let y = x - prev_x + 0.995 * prev_y;
        prev_x = x;
        prev_y = y;
        *s = y;
    }

    AudioClip::new(samples, fs).peak_normalized(0.5)
}
