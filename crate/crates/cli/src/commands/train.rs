//! `roomvol train`: fit the regressor and write checkpoint plus history.

use std::path::PathBuf;

use roomvol_core::model::{import_pretrained, save_checkpoint, ModelParams};
use roomvol_core::train::{train, write_history_csv, FeatureStore};
use roomvol_core::Result;

use crate::config::RunConfig;
use crate::lock::DirLock;

pub struct TrainArgs {
    pub index: PathBuf,
    pub out: PathBuf,
    pub pretrained: Option<PathBuf>,
}

pub fn run(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let _lock = DirLock::acquire(&args.out)?;
    cfg.write_resolved(&args.out, "train")?;
    let mut store = FeatureStore::open(&args.index)?;
    let init = match &args.pretrained {
        Some(path) => {
            println!("initializing from pretrained import {}", path.display());
            import_pretrained(path, &cfg.model, cfg.seed)?
        }
        None => ModelParams::init(&cfg.model, cfg.seed)?,
    };
    let mut tcfg = cfg.train.clone();
    tcfg.seed = cfg.seed;
    let (params, stats, history) = train(&mut store, &tcfg, init)?;
    save_checkpoint(args.out.join("checkpoint.rvck"), &params, Some(&stats))?;
    write_history_csv(args.out.join("history.csv"), &history)?;
    println!(
        "trained {} epochs (best epoch {} at validation loss {:.6e}{}), checkpoint -> {}",
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss,
        if history.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        args.out.join("checkpoint.rvck").display()
    );
    Ok(())
}
