//! `roomvol predict`: estimate the room volume behind a single recording.

use std::path::PathBuf;

use roomvol_core::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use roomvol_core::features::{featurize_clip, RowStats, FMAX_HZ, FMIN_HZ, N_BANDS};
use roomvol_core::gammatone::design_gammatone_bank;
use roomvol_core::model::{load_checkpoint, predict_log_volume};
use roomvol_core::{Error, Result};

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub wav: PathBuf,
    pub json: Option<PathBuf>,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let clip = AudioClip::read_wav(&args.wav)?;
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::parameter(format!(
            "{}: expected {SAMPLE_RATE} Hz input, got {} Hz",
            args.wav.display(),
            clip.sample_rate
        )));
    }
    let clip = clip.standardized_length(CLIP_SAMPLES);
    let bank = design_gammatone_bank(N_BANDS, FMIN_HZ, FMAX_HZ, SAMPLE_RATE as f64)?;
    let stats = checkpoint
        .row_stats
        .clone()
        .unwrap_or_else(|| RowStats::identity(N_BANDS));
    let block = featurize_clip(&clip, &bank, Some(&stats))?;
    let log10_volume = predict_log_volume(&checkpoint.params, &block)?;
    let volume_m3 = 10f64.powf(log10_volume);
    println!("log10_volume={log10_volume:.4} volume_m3={volume_m3:.1}");
    if let Some(path) = &args.json {
        let json = serde_json::json!({
            "log10_volume": log10_volume,
            "volume_m3": volume_m3,
        });
        std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}
