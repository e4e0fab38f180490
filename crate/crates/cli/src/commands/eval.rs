//! `roomvol eval`: metrics, predictions dump, confusion histogram.

use std::path::PathBuf;

use roomvol_core::dataset::Split;
use roomvol_core::features::RowStats;
use roomvol_core::metrics::confusion_hist;
use roomvol_core::model::load_checkpoint;
use roomvol_core::train::{
    confusion_svg, evaluate, write_confusion_csv, write_predictions_csv, FeatureStore,
};
use roomvol_core::Result;

use crate::config::RunConfig;
use crate::lock::DirLock;

pub struct EvalArgs {
    pub index: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Split,
    pub out: PathBuf,
}

/// `bins + 1` equally spaced edges over the label map.
pub fn label_map_edges(label_map: (f64, f64), bins: usize) -> Vec<f64> {
    let (lo, hi) = label_map;
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

pub fn run(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let _lock = DirLock::acquire(&args.out)?;
    cfg.write_resolved(&args.out, "eval")?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let stats = checkpoint
        .row_stats
        .clone()
        .unwrap_or_else(|| RowStats::identity(roomvol_core::features::N_BANDS));
    let store = FeatureStore::open(&args.index)?;
    let entries = store.split_entries(args.split);
    let outcome = evaluate(&checkpoint.params, &stats, &store, &entries)?;

    std::fs::write(
        args.out.join("metrics.json"),
        serde_json::to_string_pretty(&outcome.report)?,
    )?;
    write_predictions_csv(args.out.join("predictions.csv"), &outcome.predictions)?;
    if !outcome.errors.is_empty() {
        std::fs::write(
            args.out.join("eval_errors.json"),
            serde_json::to_string_pretty(&outcome.errors)?,
        )?;
    }

    let edges = label_map_edges(checkpoint.params.config.label_map, cfg.eval.bins);
    let preds: Vec<f64> = outcome.predictions.iter().map(|p| p.pred_log10).collect();
    let targets: Vec<f64> = outcome.predictions.iter().map(|p| p.target_log10).collect();
    let counts = confusion_hist(&preds, &targets, &edges)?;
    write_confusion_csv(args.out.join("confusion.csv"), &counts)?;
    confusion_svg(args.out.join("confusion.svg"), &counts, &edges)?;

    let r = &outcome.report;
    println!(
        "split {:?}: n={} mse={:.4} mae={:.4} rho={} mm={:.4}{}",
        args.split,
        r.n,
        r.mse,
        r.mae,
        r.rho.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
        r.mm,
        if outcome.errors.is_empty() {
            String::new()
        } else {
            format!(" ({} records skipped, see eval_errors.json)", outcome.errors.len())
        }
    );
    Ok(())
}
