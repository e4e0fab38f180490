//! Training loop (Adam with decoupled weight decay, plateau learning-rate
//! schedule, early stopping), evaluation over a feature store, and the CSV
//! and SVG reporting formats.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{read_feature_index, IndexEntry, Split};
use crate::error::{Error, Result};
use crate::features::{apply_row_standardization, FeatureBlock, RowStats, N_BANDS};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{backward, forward_train, forward_with, ModelParams};
use crate::{mix_seed, stable_hash};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    /// Minimum validation-loss decrease that counts as an improvement.
    pub improvement_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 150,
            batch_size: 32,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            plateau_factor: 0.5,
            plateau_patience: 3,
            early_stop_patience: 10,
            improvement_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// CI-scale defaults.
    pub fn desk() -> Self {
        Self {
            epochs_max: 40,
            batch_size: 8,
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch_size == 0 {
            return Err(Error::parameter("epochs_max and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::parameter("rates must be positive"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::parameter("early_stop_patience must be >= 1"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::parameter("plateau_factor must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Decision taken after observing one validation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopDecision {
    /// Keep training; `new_lr` is set when the plateau rule fires.
    Continue { new_lr: Option<f64> },
    /// Early-stopping patience exhausted.
    Stop,
}

/// Tracks validation improvements, the plateau schedule and early stopping.
///
/// An epoch improves when the loss drops below the best seen by more than
/// `improvement_eps`. The learning rate is multiplied by `plateau_factor`
/// at every `plateau_patience` consecutive non-improving epochs, and
/// training stops at exactly `early_stop_patience` of them.
#[derive(Debug, Clone)]
pub struct StopTracker {
    best: f64,
    best_epoch: usize,
    since_improve: usize,
    eps: f64,
    plateau_patience: usize,
    plateau_factor: f64,
    early_stop_patience: usize,
}

impl StopTracker {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: 0,
            since_improve: 0,
            eps: cfg.improvement_eps,
            plateau_patience: cfg.plateau_patience,
            plateau_factor: cfg.plateau_factor,
            early_stop_patience: cfg.early_stop_patience,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    /// Observes the validation loss of `epoch`; returns the decision and
    /// whether this epoch is the new best.
    pub fn observe(
        &mut self,
        epoch: usize,
        val_loss: f64,
        current_lr: f64,
    ) -> (StopDecision, bool) {
        if self.best - val_loss > self.eps {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_improve = 0;
            return (StopDecision::Continue { new_lr: None }, true);
        }
        self.since_improve += 1;
        if self.since_improve >= self.early_stop_patience {
            return (StopDecision::Stop, false);
        }
        let new_lr =
            if self.plateau_patience > 0 && self.since_improve % self.plateau_patience == 0 {
                Some(current_lr * self.plateau_factor)
            } else {
                None
            };
        (StopDecision::Continue { new_lr }, false)
    }
}

/// One history row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStat>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Feature blocks resolved through an index CSV, cached in memory.
pub struct FeatureStore {
    base_dir: PathBuf,
    entries: Vec<IndexEntry>,
    cache: HashMap<String, Arc<Array2<f64>>>,
}

impl FeatureStore {
    pub fn open(index_path: impl AsRef<Path>) -> Result<FeatureStore> {
        let index_path = index_path.as_ref();
        let entries = read_feature_index(index_path)?;
        let base_dir = index_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(FeatureStore {
            base_dir,
            entries,
            cache: HashMap::new(),
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn split_entries(&self, split: Split) -> Vec<IndexEntry> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .cloned()
            .collect()
    }

    /// Reads a block from disk (no standardization, no cache).
    pub fn load_raw(&self, entry: &IndexEntry) -> Result<FeatureBlock> {
        FeatureBlock::read_rvfb(self.base_dir.join(&entry.path))
    }

    /// Loads and caches a block with the given standardization applied.
    pub fn load_standardized(
        &mut self,
        entry: &IndexEntry,
        stats: &RowStats,
    ) -> Result<Arc<Array2<f64>>> {
        if let Some(hit) = self.cache.get(&entry.id) {
            return Ok(hit.clone());
        }
        let mut block = self.load_raw(entry)?;
        apply_row_standardization(&mut block, stats)?;
        let arc = Arc::new(block.data);
        self.cache.insert(entry.id.clone(), arc.clone());
        Ok(arc)
    }
}

/// Per-row mean/std of the magnitude rows over the given records. Blocks
/// narrower than the standard layout standardize all their rows.
pub fn compute_row_stats(store: &FeatureStore, entries: &[IndexEntry]) -> Result<RowStats> {
    if entries.is_empty() {
        return Err(Error::parameter("cannot compute statistics over zero records"));
    }
    let first = store.load_raw(&entries[0])?;
    let rows = N_BANDS.min(first.rows());
    let mut sum = vec![0.0; rows];
    let mut sum_sq = vec![0.0; rows];
    let mut count = 0usize;
    for entry in entries {
        let block = store.load_raw(entry)?;
        if block.rows() < rows {
            return Err(Error::parameter(format!(
                "{}: block has {} rows, expected at least {rows}",
                entry.id,
                block.rows()
            )));
        }
        for r in 0..rows {
            for &v in block.data.row(r) {
                sum[r] += v;
                sum_sq[r] += v * v;
            }
        }
        count += block.frames();
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sum_sq
        .iter()
        .zip(mean.iter())
        .map(|(sq, m)| ((sq / n - m * m).max(0.0)).sqrt().max(1e-8))
        .collect();
    Ok(RowStats { mean, std })
}

/// Adam optimizer with decoupled weight decay, moments held as flat
/// vectors in the canonical tensor order.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(template: &ModelParams) -> Self {
        let n = template.n_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, wd: f64) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let eps = self.eps;
        let gflat = grads.to_flat();
        let mut off = 0;
        params.visit_mut(|_, t| {
            for (k, p) in t.iter_mut().enumerate() {
                let g = gflat[off + k];
                let m = &mut self.m[off + k];
                *m = b1 * *m + (1.0 - b1) * g;
                let v = &mut self.v[off + k];
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
            }
            off += t.len();
        });
    }
}

/// Normalizes a log10 label onto the label map's unit interval.
fn normalize_label(label: f64, map: (f64, f64)) -> Result<f64> {
    let (lo, hi) = map;
    if !(label >= lo && label <= hi) {
        return Err(Error::parameter(format!(
            "label {label} outside the model label map [{lo}, {hi}]"
        )));
    }
    Ok((label - lo) / (hi - lo))
}

struct Sample {
    id: String,
    block: Arc<Array2<f64>>,
    target_norm: f64,
}

/// Trains on the `train` split, validating per epoch on `validation`.
///
/// Returns the parameters of the best validation epoch, the training-split
/// standardization statistics, and the history. Deterministic given
/// `config.seed`.
pub fn train(
    store: &mut FeatureStore,
    config: &TrainConfig,
    init: ModelParams,
) -> Result<(ModelParams, RowStats, TrainHistory)> {
    config.validate()?;
    let train_entries = store.split_entries(Split::Train);
    let val_entries = store.split_entries(Split::Validation);
    if train_entries.is_empty() || val_entries.is_empty() {
        return Err(Error::parameter(format!(
            "need nonempty train and validation splits, got {} and {}",
            train_entries.len(),
            val_entries.len()
        )));
    }
    let stats = compute_row_stats(store, &train_entries)?;
    let label_map = init.config.label_map;

    let load = |store: &mut FeatureStore, entries: &[IndexEntry]| -> Result<Vec<Sample>> {
        entries
            .iter()
            .map(|e| {
                Ok(Sample {
                    id: e.id.clone(),
                    block: store.load_standardized(e, &stats)?,
                    target_norm: normalize_label(e.label_log10_volume, label_map)?,
                })
            })
            .collect()
    };
    let train_set = load(store, &train_entries)?;
    let val_set = load(store, &val_entries)?;

    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut tracker = StopTracker::new(config);
    let mut lr = config.learning_rate;
    let mut history = TrainHistory::default();
    let mut best_params = params.clone();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs_max {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut train_sq_err = 0.0;
        for batch in order.chunks(config.batch_size) {
            // per-sample gradients in parallel, reduced in batch order
            let results: Vec<Result<(f64, ModelParams)>> = batch
                .par_iter()
                .map(|&si| {
                    let sample = &train_set[si];
                    let drop_seed =
                        mix_seed(config.seed, stable_hash(&sample.id) ^ epoch as u64);
                    let (y, cache) = forward_train(&params, &sample.block, drop_seed)?;
                    let d_y = 2.0 * (y - sample.target_norm) / batch.len() as f64;
                    let grads = backward(&params, &cache, d_y)?;
                    Ok(((y - sample.target_norm).powi(2), grads))
                })
                .collect();
            let mut batch_grads = params.zeros_like();
            for r in results {
                let (sq, g) =
                    r.map_err(|e| Error::Numerical(format!("epoch {epoch}: {e}")))?;
                train_sq_err += sq;
                batch_grads.add_scaled(&g, 1.0);
            }
            adam.step(&mut params, &batch_grads, lr, config.weight_decay);
        }
        let train_loss = train_sq_err / train_set.len() as f64;

        // validation, dropout off, ordered reduction
        let val_sq: Result<Vec<f64>> = val_set
            .par_iter()
            .map(|s| {
                let (y, _) = forward_with(&params, &s.block, None)?;
                Ok((y - s.target_norm).powi(2))
            })
            .collect();
        let val_loss = val_sq?.iter().sum::<f64>() / val_set.len() as f64;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch}: train {train_loss}, val {val_loss}"
            )));
        }

        history.epochs.push(EpochStat {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        let (decision, improved) = tracker.observe(epoch, val_loss, lr);
        if improved {
            best_params = params.clone();
        }
        match decision {
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
            StopDecision::Continue { new_lr: Some(l) } => lr = l,
            StopDecision::Continue { new_lr: None } => {}
        }
    }
    history.best_epoch = tracker.best_epoch();
    history.best_val_loss = tracker.best_loss();
    Ok((best_params, stats, history))
}

/// One prediction row of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRecord {
    pub id: String,
    pub target_log10: f64,
    pub pred_log10: f64,
}

/// Evaluation outcome: metrics, per-record predictions, per-record errors.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub predictions: Vec<PredRecord>,
    pub errors: Vec<(String, String)>,
}

/// Evaluates a split: forward per record with dropout disabled and the
/// stored training statistics applied. Missing features become per-record
/// errors; metrics cover the remainder.
pub fn evaluate(
    params: &ModelParams,
    stats: &RowStats,
    store: &FeatureStore,
    entries: &[IndexEntry],
) -> Result<EvalOutcome> {
    let (lo, hi) = params.config.label_map;
    let results: Vec<(String, f64, std::result::Result<f64, String>)> = entries
        .par_iter()
        .map(|e| {
            let run = || -> Result<f64> {
                let mut block = store.load_raw(e)?;
                apply_row_standardization(&mut block, stats)?;
                let (y, _) = forward_with(params, &block.data, None)?;
                Ok(lo + y * (hi - lo))
            };
            (
                e.id.clone(),
                e.label_log10_volume,
                run().map_err(|err| err.to_string()),
            )
        })
        .collect();

    let mut predictions = Vec::new();
    let mut errors = Vec::new();
    for (id, target, outcome) in results {
        match outcome {
            Ok(pred) => predictions.push(PredRecord {
                id,
                target_log10: target,
                pred_log10: pred,
            }),
            Err(msg) => errors.push((id, msg)),
        }
    }
    if predictions.is_empty() {
        return Err(Error::Estimation("no record could be evaluated".into()));
    }
    let preds: Vec<f64> = predictions.iter().map(|p| p.pred_log10).collect();
    let targets: Vec<f64> = predictions.iter().map(|p| p.target_log10).collect();
    let report = compute_metrics(&preds, &targets)?;
    Ok(EvalOutcome {
        report,
        predictions,
        errors,
    })
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// Writes `epoch,train_loss,val_loss,lr` rows.
pub fn write_history_csv(path: impl AsRef<Path>, history: &TrainHistory) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    writeln!(f, "epoch,train_loss,val_loss,lr")?;
    for e in &history.epochs {
        writeln!(f, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.lr)?;
    }
    Ok(())
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<TrainHistory> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    if lines.next() != Some("epoch,train_loss,val_loss,lr") {
        return Err(Error::format("bad history header"));
    }
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::format("history row needs 4 fields"));
        }
        let stat = EpochStat {
            epoch: parts[0].parse().map_err(|e| Error::format(format!("{e}")))?,
            train_loss: parts[1].parse().map_err(|e| Error::format(format!("{e}")))?,
            val_loss: parts[2].parse().map_err(|e| Error::format(format!("{e}")))?,
            lr: parts[3].parse().map_err(|e| Error::format(format!("{e}")))?,
        };
        if stat.val_loss < best {
            best = stat.val_loss;
            history.best_epoch = stat.epoch;
            history.best_val_loss = stat.val_loss;
        }
        history.epochs.push(stat);
    }
    Ok(history)
}

/// Writes `id,target_log10,pred_log10` rows.
pub fn write_predictions_csv(path: impl AsRef<Path>, preds: &[PredRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    writeln!(f, "id,target_log10,pred_log10")?;
    for p in preds {
        writeln!(f, "{},{},{}", p.id, p.target_log10, p.pred_log10)?;
    }
    Ok(())
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredRecord>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    if lines.next() != Some("id,target_log10,pred_log10") {
        return Err(Error::format("bad predictions header"));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::format("predictions row needs 3 fields"));
        }
        out.push(PredRecord {
            id: parts[0].to_string(),
            target_log10: parts[1].parse().map_err(|e| Error::format(format!("{e}")))?,
            pred_log10: parts[2].parse().map_err(|e| Error::format(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// Writes the confusion count matrix as CSV (row per target bin).
pub fn write_confusion_csv(path: impl AsRef<Path>, counts: &Array2<u64>) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    for i in 0..counts.nrows() {
        let row: Vec<String> = (0..counts.ncols())
            .map(|j| counts[[i, j]].to_string())
            .collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_confusion_csv(path: impl AsRef<Path>) -> Result<Array2<u64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let rows: Vec<Vec<u64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|e| Error::format(format!("{e}")))
                })
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::format("confusion CSV is ragged or empty"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Array2::from_shape_vec((r, c), rows.concat()).map_err(|e| Error::format(format!("{e}")))
}

/// Renders the confusion histogram as an SVG heat map with a dashed
/// diagonal reference line.
pub fn confusion_svg(path: impl AsRef<Path>, counts: &Array2<u64>, edges: &[f64]) -> Result<()> {
    let n = counts.nrows();
    if edges.len() != n + 1 {
        return Err(Error::parameter(format!(
            "need {} edges for {} bins, got {}",
            n + 1,
            n,
            edges.len()
        )));
    }
    let cell = 40.0;
    let margin = 60.0;
    let size = margin * 2.0 + cell * n as f64;
    let max = counts.iter().cloned().max().unwrap_or(0).max(1) as f64;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    ));
    // target bins on y (increasing upward), prediction bins on x
    for i in 0..n {
        for j in 0..n {
            let v = counts[[i, j]] as f64;
            let intensity = (v / max).sqrt();
            let shade = (255.0 - 205.0 * intensity) as u8;
            let x = margin + j as f64 * cell;
            let y = margin + (n - 1 - i) as f64 * cell;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#ccc\"/>\n"
            ));
            if counts[[i, j]] > 0 {
                svg.push_str(&format!(
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">{}</text>\n",
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0,
                    counts[[i, j]]
                ));
            }
        }
    }
    // dashed diagonal reference (perfect prediction)
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n",
        margin,
        margin + cell * n as f64,
        margin + cell * n as f64,
        margin
    ));
    // axis tick labels in log10 m^3
    for (k, e) in edges.iter().enumerate() {
        let x = margin + k as f64 * cell;
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{e:.1}</text>\n",
            margin + cell * n as f64 + 16.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{e:.1}</text>\n",
            margin - 6.0,
            margin + cell * (n - k) as f64 + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">predicted log10 volume</text>\n",
        margin + cell * n as f64 / 2.0,
        size - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">target log10 volume</text>\n",
        margin + cell * n as f64 / 2.0,
        margin + cell * n as f64 / 2.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

/// Renders train/validation loss curves from a history as SVG.
pub fn history_svg(path: impl AsRef<Path>, history: &TrainHistory) -> Result<()> {
    if history.epochs.is_empty() {
        return Err(Error::parameter("history is empty"));
    }
    let w = 640.0;
    let h = 400.0;
    let margin = 50.0;
    let max_loss = history
        .epochs
        .iter()
        .map(|e| e.train_loss.max(e.val_loss))
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let n = history.epochs.len();
    let x_of = |i: usize| margin + (w - 2.0 * margin) * i as f64 / (n.max(2) - 1) as f64;
    let y_of = |loss: f64| h - margin - (h - 2.0 * margin) * (loss / max_loss);
    let polyline = |key: fn(&EpochStat) -> f64| -> String {
        history
            .epochs
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{:.1},{:.1}", x_of(i), y_of(key(e))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
        polyline(|e| e.train_loss)
    ));
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"darkorange\" stroke-width=\"2\"/>\n",
        polyline(|e| e.val_loss)
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"20\" font-size=\"12\" fill=\"steelblue\">train loss</text>\n<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"darkorange\">validation loss</text>\n",
        margin + 90.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n</svg>\n",
        w / 2.0,
        h - 10.0
    ));
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}
