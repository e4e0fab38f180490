//! `roomvol plot`: SVG renderings from existing CSV outputs.

use std::path::PathBuf;

use roomvol_core::train::{confusion_svg, history_svg, read_confusion_csv, read_history_csv};
use roomvol_core::{Error, Result};

use crate::commands::eval::label_map_edges;
use crate::config::RunConfig;
use crate::lock::DirLock;

pub struct PlotArgs {
    pub history: Option<PathBuf>,
    pub confusion: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn run(cfg: &RunConfig, args: &PlotArgs) -> Result<()> {
    if args.history.is_none() && args.confusion.is_none() {
        return Err(Error::parameter(
            "nothing to plot: pass --history and/or --confusion",
        ));
    }
    let _lock = DirLock::acquire(&args.out)?;
    cfg.write_resolved(&args.out, "plot")?;
    if let Some(path) = &args.history {
        let history = read_history_csv(path)?;
        let out = args.out.join("history.svg");
        history_svg(&out, &history)?;
        println!("wrote {}", out.display());
    }
    if let Some(path) = &args.confusion {
        let counts = read_confusion_csv(path)?;
        let edges = label_map_edges(cfg.model.label_map, counts.nrows());
        let out = args.out.join("confusion.svg");
        confusion_svg(&out, &counts, &edges)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
