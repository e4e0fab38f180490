//! Run configuration: profile defaults, JSON config-file overrides, and the
//! resolved-config record written next to every command's outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use roomvol_core::model::ModelConfig;
use roomvol_core::specaugment::AugmentParams;
use roomvol_core::train::TrainConfig;
use roomvol_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// CI-scale defaults: small model, synthetic speech, tens of records.
    Desk,
    /// Paper-scale defaults: ViT-Base-like model, external speech corpus.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateCfg {
    pub rooms: usize,
    pub volume_range: (f64, f64),
    pub rt60_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildCfg {
    pub speech_count: usize,
    pub records: usize,
    pub augment_fraction: f64,
    pub allow_simulated_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentCfg {
    pub n_mels: usize,
    pub fft_size: usize,
    pub mel_hop: usize,
    pub n_freq_masks: usize,
    pub freq_mask_max: usize,
    pub n_time_masks: usize,
    pub time_mask_max: usize,
    pub time_warp_max: usize,
    pub griffin_lim_iters: usize,
}

impl AugmentCfg {
    pub fn to_params(&self, rng_seed: u64) -> AugmentParams {
        AugmentParams {
            n_mels: self.n_mels,
            fft_size: self.fft_size,
            mel_hop: self.mel_hop,
            n_freq_masks: self.n_freq_masks,
            freq_mask_max: self.freq_mask_max,
            n_time_masks: self.n_time_masks,
            time_mask_max: self.time_mask_max,
            time_warp_max: self.time_warp_max,
            griffin_lim_iters: self.griffin_lim_iters,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCfg {
    pub bins: usize,
}

/// Everything a run needs, resolved from profile defaults, an optional JSON
/// config file, and command-line flags (in that order of precedence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub simulate: SimulateCfg,
    pub build: BuildCfg,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentCfg,
    pub eval: EvalCfg,
}

impl RunConfig {
    pub fn defaults(profile: Profile, seed: u64) -> Self {
        let augment_full = AugmentCfg {
            n_mels: 80,
            fft_size: 512,
            mel_hop: 160,
            n_freq_masks: 2,
            freq_mask_max: 15,
            n_time_masks: 2,
            time_mask_max: 100,
            time_warp_max: 40,
            griffin_lim_iters: 32,
        };
        match profile {
            Profile::Desk => RunConfig {
                profile,
                seed,
                simulate: SimulateCfg {
                    rooms: 8,
                    volume_range: (50.0, 5000.0),
                    rt60_range: (0.2, 0.8),
                },
                build: BuildCfg {
                    speech_count: 6,
                    records: 48,
                    augment_fraction: 0.25,
                    allow_simulated_test: false,
                },
                model: ModelConfig::desk(),
                train: TrainConfig {
                    epochs_max: 25,
                    seed,
                    ..TrainConfig::desk()
                },
                augment: AugmentCfg {
                    griffin_lim_iters: 16,
                    ..augment_full
                },
                eval: EvalCfg { bins: 10 },
            },
            Profile::Full => RunConfig {
                profile,
                seed,
                simulate: SimulateCfg {
                    rooms: 30,
                    volume_range: (12.0, 21000.0),
                    rt60_range: (0.2, 1.0),
                },
                build: BuildCfg {
                    speech_count: 0, // full profile reads a speech directory
                    records: 32_000,
                    augment_fraction: 0.25,
                    allow_simulated_test: false,
                },
                model: ModelConfig::full(),
                train: TrainConfig {
                    seed,
                    ..TrainConfig::default()
                },
                augment: augment_full,
                eval: EvalCfg { bins: 10 },
            },
        }
    }

    /// Applies a partial JSON override file on top of these values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let overlay: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&*self)?;
        merge_json(&mut base, overlay);
        *self = serde_json::from_value(base)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Writes the resolved configuration next to a command's outputs.
    pub fn write_resolved(&self, out_dir: &Path, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Resolved<'a> {
            command: &'a str,
            #[serde(flatten)]
            config: &'a RunConfig,
        }
        let json = serde_json::to_string_pretty(&Resolved {
            command,
            config: self,
        })?;
        std::fs::write(out_dir.join("resolved_config.json"), json)?;
        Ok(())
    }
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses "LO,HI" into a range pair.
pub fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected LO,HI, got {s:?}"));
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}
