//! `roomvol build`: construct a dataset manifest and render its audio.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use roomvol_core::dataset::{
    build_manifest, rir_records, render_record, BuildPlan, DatasetKind, NoiseSpec, SpeechSource,
};
use roomvol_core::room::load_rir_store;
use roomvol_core::{Error, Result};

use crate::config::RunConfig;
use crate::lock::DirLock;

pub struct BuildArgs {
    pub rir_dirs: Vec<PathBuf>,
    pub speech: String,
    pub dataset: DatasetKind,
    pub out: PathBuf,
}

/// Utterance ids for a speech source: synthetic ids, or `<id>.wav` stems of
/// a directory.
fn speech_ids(source: &str, count: usize) -> Result<(SpeechSource, Vec<String>)> {
    if source == "synthetic" {
        return Ok((
            SpeechSource::synthetic(),
            SpeechSource::synthetic_ids(count),
        ));
    }
    let dir = PathBuf::from(source);
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(&dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("wav") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::config(format!(
            "no .wav utterances found in {}",
            dir.display()
        )));
    }
    Ok((SpeechSource::directory(dir), ids))
}

pub fn run(cfg: &RunConfig, args: &BuildArgs) -> Result<()> {
    let _lock = DirLock::acquire(&args.out)?;
    cfg.write_resolved(&args.out, "build")?;

    let mut stored = Vec::new();
    for dir in &args.rir_dirs {
        stored.extend(load_rir_store(dir)?);
    }
    if stored.is_empty() {
        return Err(Error::config("no RIR records found in the given stores"));
    }
    let records = rir_records(&stored);
    let (speech, utterances) = speech_ids(&args.speech, cfg.build.speech_count)?;
    let grid = NoiseSpec::standard_grid();

    let mut plan = BuildPlan::new(&utterances, &records, &grid);
    plan.target_records = Some(cfg.build.records);
    plan.dataset = args.dataset;
    plan.augment_fraction = cfg.build.augment_fraction;
    plan.allow_simulated_test = cfg.build.allow_simulated_test;
    plan.seed = cfg.seed;
    let manifest = build_manifest(&plan)?;
    manifest.save(args.out.join("manifest.json"))?;

    let audio_dir = args.out.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let by_id: HashMap<&str, &roomvol_core::room::StoredRir> = stored
        .iter()
        .map(|s| (s.record.id.as_str(), s))
        .collect();
    let augment = cfg.augment.to_params(0);
    let failures: Vec<String> = manifest
        .records
        .par_iter()
        .filter_map(|record| {
            let render = || -> Result<()> {
                let stored = by_id.get(record.rir_id.as_str()).ok_or_else(|| {
                    Error::config(format!("manifest references unknown RIR {}", record.rir_id))
                })?;
                let rir = stored.load()?;
                let clip = render_record(record, &speech, &rir, &augment, cfg.seed)?;
                clip.write_wav(audio_dir.join(format!("{}.wav", record.id())))?;
                Ok(())
            };
            render().err().map(|e| format!("{}: {e}", record.id()))
        })
        .collect();
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f}");
        }
        return Err(Error::config(format!(
            "{} of {} records failed to render",
            failures.len(),
            manifest.records.len()
        )));
    }
    let (tr, va, te) = manifest.split_counts();
    println!(
        "built dataset {:?}: {} records (train {tr} / validation {va} / test {te}) in {}",
        args.dataset,
        manifest.records.len(),
        args.out.display()
    );
    Ok(())
}
