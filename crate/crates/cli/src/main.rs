//! Room-volume estimation pipeline CLI.
//!
//! Exit codes: 0 success, 1 usage, 2 asset/I-O, 3 checkpoint, 4 data format.

mod commands;
mod config;
mod lock;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use roomvol_core::dataset::{DatasetKind, Split};
use roomvol_core::room::Provenance;
use roomvol_core::Error;

use commands::build::BuildArgs;
use commands::eval::EvalArgs;
use commands::featurize::FeaturizeArgs;
use commands::plot::PlotArgs;
use commands::predict::PredictArgs;
use commands::train::TrainArgs;
use config::{parse_range, Profile, RunConfig};

#[derive(Parser)]
#[command(
    name = "roomvol",
    version,
    about = "Blind room-volume estimation: simulate RIRs, build datasets, featurize, train, evaluate"
)]
struct Cli {
    /// Base RNG seed (env: ROOMVOL_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parameter profile (env: ROOMVOL_PROFILE).
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// JSON file overriding any resolved default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated shoebox RIRs with sidecar metadata.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Number of rooms (profile default when omitted).
        #[arg(long)]
        rooms: Option<usize>,
        /// Volume range in m^3 as LO,HI.
        #[arg(long, value_parser = parse_range)]
        volume_range: Option<(f64, f64)>,
        /// RT60 target range in seconds as LO,HI.
        #[arg(long, value_parser = parse_range)]
        rt60_range: Option<(f64, f64)>,
        /// Provenance recorded in the sidecars; `external` builds stand-in
        /// stores for measured-room workflows.
        #[arg(long, default_value = "simulated")]
        provenance: String,
    },
    /// Build a dataset manifest and render reverberant/noisy audio.
    Build {
        /// One or more RIR store directories.
        #[arg(long, required = true, value_delimiter = ',')]
        rirs: Vec<PathBuf>,
        /// `synthetic` or a directory of 16 kHz mono WAV utterances.
        #[arg(long, default_value = "synthetic")]
        speech: String,
        #[arg(long, value_parser = parse_dataset, default_value = "I")]
        dataset: DatasetKind,
        /// Total record count before augmentation.
        #[arg(long)]
        records: Option<usize>,
        /// Allow simulated rooms in the test split.
        #[arg(long)]
        allow_simulated_test: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert rendered audio into RVFB feature files plus an index.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `<record id>.wav` files.
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the regressor on an indexed feature store.
    Train {
        #[arg(long)]
        index: PathBuf,
        /// Epoch cap override.
        #[arg(long)]
        epochs: Option<usize>,
        /// RVCK import file with 3-channel pretrained tensors.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_split, default_value = "test")]
        split: Split,
        /// Confusion-histogram bin count override.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the volume behind a single 16 kHz WAV file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Also write the estimate as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render SVG plots from existing CSV outputs.
    Plot {
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    match s {
        "I" | "i" | "1" => Ok(DatasetKind::I),
        "II" | "ii" | "2" => Ok(DatasetKind::II),
        other => Err(format!("expected I or II, got {other:?}")),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "validation" | "val" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(format!("expected train|validation|test, got {other:?}")),
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) => 1,
        Error::Config(_) | Error::Estimation(_) | Error::Numerical(_) => 2,
        Error::Io(_) | Error::Wav(_) => 2,
        Error::Checkpoint(_) => 3,
        Error::Format(_) | Error::Json(_) => 4,
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("ROOMVOL_SEED").ok()?.parse().ok()
}

fn env_profile() -> Option<Profile> {
    match std::env::var("ROOMVOL_PROFILE").ok()?.to_lowercase().as_str() {
        "desk" => Some(Profile::Desk),
        "full" => Some(Profile::Full),
        _ => None,
    }
}

fn run(cli: Cli) -> roomvol_core::Result<()> {
    let profile = cli.profile.or_else(env_profile).unwrap_or(Profile::Desk);
    let seed = cli.seed.or_else(env_seed).unwrap_or(1234);
    let mut cfg = RunConfig::defaults(profile, seed);
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    // explicit flags override both defaults and the config file
    cfg.seed = cli.seed.or_else(env_seed).unwrap_or(cfg.seed);
    cfg.train.seed = cfg.seed;

    match cli.command {
        Command::Simulate {
            out,
            rooms,
            volume_range,
            rt60_range,
            provenance,
        } => {
            if let Some(r) = rooms {
                cfg.simulate.rooms = r;
            }
            if let Some(v) = volume_range {
                cfg.simulate.volume_range = v;
            }
            if let Some(t) = rt60_range {
                cfg.simulate.rt60_range = t;
            }
            let provenance = match provenance.as_str() {
                "simulated" => Provenance::Simulated,
                "external" => Provenance::External,
                other => {
                    return Err(Error::parameter(format!(
                        "provenance must be simulated or external, got {other:?}"
                    )))
                }
            };
            commands::simulate::run(&cfg, &out, provenance)
        }
        Command::Build {
            rirs,
            speech,
            dataset,
            records,
            allow_simulated_test,
            out,
        } => {
            if let Some(r) = records {
                cfg.build.records = r;
            }
            if allow_simulated_test {
                cfg.build.allow_simulated_test = true;
            }
            commands::build::run(
                &cfg,
                &BuildArgs {
                    rir_dirs: rirs,
                    speech,
                    dataset,
                    out,
                },
            )
        }
        Command::Featurize {
            manifest,
            audio,
            out,
        } => commands::featurize::run(
            &cfg,
            &FeaturizeArgs {
                manifest,
                audio,
                out,
            },
        ),
        Command::Train {
            index,
            epochs,
            pretrained,
            out,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs_max = e;
            }
            commands::train::run(
                &cfg,
                &TrainArgs {
                    index,
                    out,
                    pretrained,
                },
            )
        }
        Command::Eval {
            index,
            checkpoint,
            split,
            bins,
            out,
        } => {
            if let Some(b) = bins {
                cfg.eval.bins = b;
            }
            commands::eval::run(
                &cfg,
                &EvalArgs {
                    index,
                    checkpoint,
                    split,
                    out,
                },
            )
        }
        Command::Predict {
            checkpoint,
            wav,
            json,
        } => commands::predict::run(&PredictArgs {
            checkpoint,
            wav,
            json,
        }),
        Command::Plot {
            history,
            confusion,
            out,
        } => commands::plot::run(
            &cfg,
            &PlotArgs {
                history,
                confusion,
                out,
            },
        ),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version print to stdout and exit 0; real usage errors exit 1
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
