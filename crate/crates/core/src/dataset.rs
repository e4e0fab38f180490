//! Dataset construction: reverberant/noisy record manifests, audio
//! rendering, and batch featurization into the RVFB store.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::features::{featurize_clip, FeatureBlock};
use crate::gammatone::design_gammatone_bank;
use crate::room::{Provenance, Rir, RirRecord, StoredRir};
use crate::specaugment::{specaugment, AugmentParams};
use crate::speech::synth_speech;
use crate::{mix_seed, stable_hash};

/// The SNR grid from the data-generation recipe, in dB.
pub const SNR_GRID_DB: [f64; 4] = [30.0, 20.0, 10.0, 0.0];

/// Noise condition attached to one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    None,
    White { snr_db: f64 },
    Babble { snr_db: f64 },
}

impl NoiseSpec {
    pub fn tag(&self) -> String {
        match self {
            NoiseSpec::None => "clean".to_string(),
            NoiseSpec::White { snr_db } => format!("w{:+03}", *snr_db as i64),
            NoiseSpec::Babble { snr_db } => format!("b{:+03}", *snr_db as i64),
        }
    }

    /// The standard grid: both noise kinds at [+30, +20, +10, +0] dB.
    pub fn standard_grid() -> Vec<NoiseSpec> {
        let mut grid = Vec::new();
        for &snr in &SNR_GRID_DB {
            grid.push(NoiseSpec::White { snr_db: snr });
            grid.push(NoiseSpec::Babble { snr_db: snr });
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub rir_id: String,
    pub noise: NoiseSpec,
    pub augmented: bool,
    pub split: Split,
    pub label_log10_volume: f64,
}

impl ManifestRecord {
    /// Stable unique identifier, used for file names and seed derivation.
    pub fn id(&self) -> String {
        let mut id = format!("{}__{}__{}", self.utterance_id, self.rir_id, self.noise.tag());
        if self.augmented {
            id.push_str("__aug");
        }
        id
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.records)?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let records: Vec<ManifestRecord> = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.as_ref().display())))?;
        Ok(DatasetManifest { records })
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for r in &self.records {
            match r.split {
                Split::Train => c.0 += 1,
                Split::Validation => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    I,
    II,
}

/// Inputs for [`build_manifest`].
#[derive(Debug, Clone)]
pub struct BuildPlan<'a> {
    pub speech_ids: &'a [String],
    pub rirs: &'a [RirRecord],
    pub noise_grid: &'a [NoiseSpec],
    /// Total record count for Dataset I; `None` keeps the full cartesian set.
    pub target_records: Option<usize>,
    pub split_ratio: (u32, u32, u32),
    pub dataset: DatasetKind,
    /// Augmented records added per train record for Dataset II.
    pub augment_fraction: f64,
    /// Permit simulated rooms in the test split when no external rooms exist.
    pub allow_simulated_test: bool,
    pub seed: u64,
}

impl<'a> BuildPlan<'a> {
    pub fn new(
        speech_ids: &'a [String],
        rirs: &'a [RirRecord],
        noise_grid: &'a [NoiseSpec],
    ) -> Self {
        Self {
            speech_ids,
            rirs,
            noise_grid,
            target_records: None,
            split_ratio: (6, 2, 2),
            dataset: DatasetKind::I,
            augment_fraction: 0.25,
            allow_simulated_test: false,
            seed: 0,
        }
    }
}

struct RoomGroup<'a> {
    rirs: Vec<&'a RirRecord>,
    external: bool,
}

/// Builds a split manifest: rooms (not individual RIRs) are disjoint across
/// splits, the test split uses externally recorded rooms only, and Dataset II
/// appends augmented no-noise records derived from the train split.
pub fn build_manifest(plan: &BuildPlan) -> Result<DatasetManifest> {
    if plan.speech_ids.is_empty() || plan.rirs.is_empty() || plan.noise_grid.is_empty() {
        return Err(Error::parameter("speech, RIR and noise lists must be nonempty"));
    }
    let (r_train, r_val, r_test) = plan.split_ratio;
    let ratio_sum = (r_train + r_val + r_test) as f64;
    if ratio_sum == 0.0 {
        return Err(Error::parameter("split ratio sums to zero"));
    }

    let per_room_capacity = plan.speech_ids.len() * plan.noise_grid.len();
    let cartesian_total = per_room_capacity * plan.rirs.len();
    let total = plan.target_records.unwrap_or(cartesian_total).min(cartesian_total);
    if total == 0 {
        return Err(Error::parameter("no records requested"));
    }
    let n_train = (total as f64 * r_train as f64 / ratio_sum).round() as usize;
    let n_val = (total as f64 * r_val as f64 / ratio_sum).round() as usize;
    let n_test = total.saturating_sub(n_train + n_val);

    // Group RIRs by room.
    let mut rooms: BTreeMap<String, RoomGroup> = BTreeMap::new();
    for rir in plan.rirs {
        let entry = rooms.entry(rir.room_key()).or_insert(RoomGroup {
            rirs: Vec::new(),
            external: false,
        });
        entry.rirs.push(rir);
        if rir.provenance == Provenance::External {
            entry.external = true;
        }
    }
    let mut room_keys: Vec<String> = rooms.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(plan.seed, 0x524f4f4d));
    room_keys.shuffle(&mut rng);

    // Assign rooms to splits: external rooms feed the test split first.
    let n_rooms = room_keys.len();
    let rooms_test = ((n_rooms as f64 * r_test as f64 / ratio_sum).round() as usize).max(1);
    let rooms_val = ((n_rooms as f64 * r_val as f64 / ratio_sum).round() as usize).max(1);

    let mut test_rooms: Vec<String> = Vec::new();
    let mut rest: Vec<String> = Vec::new();
    for key in &room_keys {
        if rooms[key].external && test_rooms.len() < rooms_test {
            test_rooms.push(key.clone());
        } else {
            rest.push(key.clone());
        }
    }
    if test_rooms.is_empty() && n_test > 0 {
        if plan.allow_simulated_test {
            if let Some(k) = rest.pop() {
                test_rooms.push(k);
            }
        } else {
            return Err(Error::config(
                "test split requires externally recorded rooms; none available",
            ));
        }
    }
    let rooms_val = rooms_val.min(rest.len().saturating_sub(1));
    let val_rooms: Vec<String> = rest.drain(..rooms_val).collect();
    let train_rooms = rest;
    if train_rooms.is_empty() && n_train > 0 {
        return Err(Error::config("no rooms left for the train split"));
    }

    // Sample records within each split.
    let mut records = Vec::with_capacity(total);
    let mut draw = |rooms_of: &[String], want: usize, split: Split, stream: u64| -> Result<()> {
        let mut pool: Vec<(String, &RirRecord, NoiseSpec)> = Vec::new();
        for key in rooms_of {
            for rir in &rooms[key].rirs {
                for utt in plan.speech_ids {
                    for noise in plan.noise_grid {
                        pool.push((utt.clone(), rir, *noise));
                    }
                }
            }
        }
        if pool.len() < want {
            return Err(Error::config(format!(
                "{} split needs {want} records but only {} combinations exist",
                split.as_str(),
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(plan.seed, stream));
        pool.shuffle(&mut rng);
        for (utterance_id, rir, noise) in pool.into_iter().take(want) {
            records.push(ManifestRecord {
                utterance_id,
                rir_id: rir.id.clone(),
                noise,
                augmented: false,
                split,
                label_log10_volume: rir.volume_m3.log10(),
            });
        }
        Ok(())
    };
    draw(&train_rooms, n_train, Split::Train, 1)?;
    draw(&val_rooms, n_val, Split::Validation, 2)?;
    draw(&test_rooms, n_test, Split::Test, 3)?;

    // Dataset II: augmented no-noise records from distinct train pairs.
    if plan.dataset == DatasetKind::II {
        let n_aug = (n_train as f64 * plan.augment_fraction).round() as usize;
        let mut pairs: Vec<(String, String, f64)> = Vec::new();
        let mut seen = BTreeSet::new();
        for r in records.iter().filter(|r| r.split == Split::Train) {
            let key = (r.utterance_id.clone(), r.rir_id.clone());
            if seen.insert(key.clone()) {
                pairs.push((key.0, key.1, r.label_log10_volume));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(plan.seed, 4));
        pairs.shuffle(&mut rng);
        for (utterance_id, rir_id, label) in pairs.into_iter().take(n_aug) {
            records.push(ManifestRecord {
                utterance_id,
                rir_id,
                noise: NoiseSpec::None,
                augmented: true,
                split: Split::Train,
                label_log10_volume: label,
            });
        }
    }

    records.sort_by(|a, b| (a.split, a.id()).cmp(&(b.split, b.id())));
    Ok(DatasetManifest { records })
}

/// Full linear convolution via FFT, truncated to the standardized clip
/// length and peak-normalized to 0.9.
pub fn convolve_speech(clip: &AudioClip, rir: &Rir) -> Result<AudioClip> {
    if clip.sample_rate != rir.fs {
        return Err(Error::parameter(format!(
            "sample-rate mismatch: clip {} Hz vs RIR {} Hz",
            clip.sample_rate, rir.fs
        )));
    }
    let full = fft_convolve(&clip.samples, &rir.taps);
    let truncated: Vec<f64> = full.into_iter().take(CLIP_SAMPLES).collect();
    Ok(AudioClip::new(truncated, clip.sample_rate)
        .standardized_length(CLIP_SAMPLES)
        .peak_normalized(0.9))
}

/// Linear convolution of two real sequences via a complex FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut fb: Vec<Complex64> = b
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    ifft.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.into_iter().take(out_len).map(|c| c.re * scale).collect()
}

/// Number of clips summed into the synthetic babble bed.
pub const BABBLE_VOICES: usize = 6;

/// Generates the signal and the exactly-scaled noise addend; the mixed clip
/// is their sample-wise sum.
pub fn mix_noise_components(
    clip: &AudioClip,
    spec: &NoiseSpec,
    rng_seed: u64,
) -> Result<(AudioClip, AudioClip)> {
    let p_signal = clip.power();
    if !(p_signal > 0.0) {
        return Err(Error::parameter("cannot mix noise into a zero-power clip"));
    }
    let snr_db = match spec {
        NoiseSpec::None => {
            return Ok((clip.clone(), AudioClip::zeros(clip.len(), clip.sample_rate)))
        }
        NoiseSpec::White { snr_db } | NoiseSpec::Babble { snr_db } => *snr_db,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let raw: Vec<f64> = match spec {
        NoiseSpec::White { .. } => (0..clip.len())
            .map(|_| crate::speech::gauss(&mut rng))
            .collect(),
        NoiseSpec::Babble { .. } => {
            // sum of independently shifted synthetic talkers
            let mut acc = vec![0.0; clip.len()];
            for _ in 0..BABBLE_VOICES {
                let voice_seed: u64 = rng.random();
                let shift = rng.random_range(0..clip.len());
                let voice = synth_speech(voice_seed, clip.len(), clip.sample_rate);
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += voice.samples[(i + shift) % clip.len()];
                }
            }
            acc
        }
        NoiseSpec::None => unreachable!(),
    };
    let p_raw = raw.iter().map(|x| x * x).sum::<f64>() / raw.len() as f64;
    if !(p_raw > 0.0) {
        return Err(Error::Numerical("generated noise has zero power".into()));
    }
    let scale = (p_signal / (p_raw * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise = AudioClip::new(raw.into_iter().map(|x| x * scale).collect(), clip.sample_rate);
    Ok((clip.clone(), noise))
}

/// Adds noise at an exact SNR; the output is `clip + noise` with no hidden
/// processing.
pub fn mix_noise(clip: &AudioClip, spec: &NoiseSpec, rng_seed: u64) -> Result<AudioClip> {
    let (signal, noise) = mix_noise_components(clip, spec, rng_seed)?;
    let samples = signal
        .samples
        .iter()
        .zip(noise.samples.iter())
        .map(|(a, b)| a + b)
        .collect();
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Provides clean utterances by id. `synthetic:<seed>` ids are generated on
/// demand; anything else resolves to `<dir>/<id>.wav`.
pub struct SpeechSource {
    dir: Option<PathBuf>,
}

impl SpeechSource {
    pub fn synthetic() -> Self {
        Self { dir: None }
    }

    pub fn directory(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    /// Ids for `count` synthetic utterances.
    pub fn synthetic_ids(count: usize) -> Vec<String> {
        (0..count).map(|i| format!("synthetic:{i:04}")).collect()
    }

    pub fn load(&self, utterance_id: &str) -> Result<AudioClip> {
        if let Some(seed_str) = utterance_id.strip_prefix("synthetic:") {
            let seed = seed_str
                .parse::<u64>()
                .map_err(|_| Error::parameter(format!("bad synthetic id {utterance_id}")))?;
            return Ok(synth_speech(
                mix_seed(0x53504543, seed),
                CLIP_SAMPLES,
                SAMPLE_RATE,
            ));
        }
        let dir = self.dir.as_ref().ok_or_else(|| {
            Error::config(format!(
                "utterance {utterance_id} requires a speech directory"
            ))
        })?;
        let clip = AudioClip::read_wav(dir.join(format!("{utterance_id}.wav")))?;
        if clip.sample_rate != SAMPLE_RATE {
            return Err(Error::parameter(format!(
                "{utterance_id}: expected {SAMPLE_RATE} Hz, got {}",
                clip.sample_rate
            )));
        }
        Ok(clip.standardized_length(CLIP_SAMPLES))
    }
}

/// Renders the processed audio for one record: convolve with the RIR, then
/// either mix noise or run the augmentation chain.
pub fn render_record(
    record: &ManifestRecord,
    speech: &SpeechSource,
    rir: &Rir,
    augment: &AugmentParams,
    seed: u64,
) -> Result<AudioClip> {
    let clean = speech.load(&record.utterance_id)?;
    let reverberant = convolve_speech(&clean, rir)?;
    let record_seed = mix_seed(seed, stable_hash(&record.id()));
    if record.augmented {
        let params = AugmentParams {
            rng_seed: record_seed,
            ..augment.clone()
        };
        specaugment(&reverberant, &params)
    } else {
        mix_noise(&reverberant, &record.noise, record_seed)
    }
}

/// Featurization report: which records were written and which failed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeaturizeReport {
    pub written: Vec<String>,
    pub errors: Vec<(String, String)>,
}

/// Entry in the feature index CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub path: String,
    pub label_log10_volume: f64,
    pub split: Split,
}

/// Writes `index.csv` with header `id,path,label_log10_volume,split`.
pub fn write_feature_index(path: impl AsRef<Path>, entries: &[IndexEntry]) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    writeln!(f, "id,path,label_log10_volume,split")?;
    for e in entries {
        writeln!(
            f,
            "{},{},{},{}",
            e.id,
            e.path,
            e.label_log10_volume,
            e.split.as_str()
        )?;
    }
    Ok(())
}

pub fn read_feature_index(path: impl AsRef<Path>) -> Result<Vec<IndexEntry>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    match lines.next() {
        Some("id,path,label_log10_volume,split") => {}
        other => {
            return Err(Error::format(format!(
                "{}: bad index header {other:?}",
                path.as_ref().display()
            )))
        }
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::format(format!(
                "{}:{}: expected 4 fields",
                path.as_ref().display(),
                lineno + 2
            )));
        }
        let split = match parts[3] {
            "train" => Split::Train,
            "validation" => Split::Validation,
            "test" => Split::Test,
            s => return Err(Error::format(format!("unknown split {s}"))),
        };
        entries.push(IndexEntry {
            id: parts[0].to_string(),
            path: parts[1].to_string(),
            label_log10_volume: parts[2]
                .parse()
                .map_err(|e| Error::format(format!("bad label: {e}")))?,
            split,
        });
    }
    Ok(entries)
}

/// Featurizes every record of a manifest from its rendered audio file.
///
/// Missing or broken assets produce per-record errors; the run continues
/// and reports them. Re-running produces bit-identical RVFB files.
pub fn featurize_dataset(
    manifest: &DatasetManifest,
    audio_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
) -> Result<FeaturizeReport> {
    let audio_dir = audio_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let feature_dir = out_dir.join("features");
    std::fs::create_dir_all(&feature_dir)?;
    let bank = design_gammatone_bank(
        crate::features::N_BANDS,
        crate::features::FMIN_HZ,
        crate::features::FMAX_HZ,
        SAMPLE_RATE as f64,
    )?;

    let results: Vec<(String, std::result::Result<(), String>)> = manifest
        .records
        .par_iter()
        .map(|record| {
            let id = record.id();
            let run = || -> Result<()> {
                let wav = audio_dir.join(format!("{id}.wav"));
                let clip = AudioClip::read_wav(&wav)?;
                let block = featurize_clip(
                    &clip.standardized_length(CLIP_SAMPLES),
                    &bank,
                    None,
                )?;
                block.write_rvfb(feature_dir.join(format!("{id}.rvfb")))?;
                Ok(())
            };
            let outcome = run().map_err(|e| e.to_string());
            (id, outcome)
        })
        .collect();

    let mut report = FeaturizeReport::default();
    let mut entries = Vec::new();
    for (record, (id, outcome)) in manifest.records.iter().zip(results) {
        match outcome {
            Ok(()) => {
                entries.push(IndexEntry {
                    id: id.clone(),
                    path: format!("features/{id}.rvfb"),
                    label_log10_volume: record.label_log10_volume,
                    split: record.split,
                });
                report.written.push(id);
            }
            Err(msg) => report.errors.push((id, msg)),
        }
    }
    write_feature_index(out_dir.join("index.csv"), &entries)?;
    Ok(report)
}

/// Loads a feature block referenced by an index entry (path relative to the
/// index location).
pub fn load_indexed_block(index_dir: impl AsRef<Path>, entry: &IndexEntry) -> Result<FeatureBlock> {
    FeatureBlock::read_rvfb(index_dir.as_ref().join(&entry.path))
}

/// Convenience accessor pairing stored RIRs with their ids.
pub fn rir_records<'a>(store: &'a [StoredRir]) -> Vec<RirRecord> {
    store.iter().map(|s| s.record.clone()).collect()
}
