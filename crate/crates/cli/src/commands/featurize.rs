//! `roomvol featurize`: render feature blocks for every manifest record.

use std::path::PathBuf;

use roomvol_core::dataset::{featurize_dataset, DatasetManifest};
use roomvol_core::{Error, Result};

use crate::config::RunConfig;
use crate::lock::DirLock;

pub struct FeaturizeArgs {
    pub manifest: PathBuf,
    pub audio: PathBuf,
    pub out: PathBuf,
}

pub fn run(cfg: &RunConfig, args: &FeaturizeArgs) -> Result<()> {
    let _lock = DirLock::acquire(&args.out)?;
    cfg.write_resolved(&args.out, "featurize")?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let report = featurize_dataset(&manifest, &args.audio, &args.out)?;
    let report_path = args.out.join("featurize_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "featurized {} records ({} errors) -> {}",
        report.written.len(),
        report.errors.len(),
        args.out.display()
    );
    if !report.errors.is_empty() {
        for (id, msg) in &report.errors {
            eprintln!("error: {id}: {msg}");
        }
    }
    if report.written.is_empty() && !manifest.records.is_empty() {
        return Err(Error::config("every record failed to featurize"));
    }
    Ok(())
}
