//! Blind geometric room-volume estimation from single-channel noisy speech.
//!
//! The crate covers the full pipeline: shoebox RIR simulation with Sabine
//! utilities, reverberant/noisy dataset construction with SpecAugment-style
//! augmentation, Gammatone+phase featurization, a purely attention-based
//! patch regressor with pretrained-weight adaptation, and a training and
//! evaluation harness.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gammatone;
pub mod metrics;
pub mod model;
pub mod room;
pub mod specaugment;
pub mod speech;
pub mod train;

pub use error::{Error, Result};

/// FNV-1a hash of a string, used to derive stable per-record seeds.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 step, used to decorrelate derived seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
