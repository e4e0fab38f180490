//! `roomvol simulate`: generate a labeled RIR store.

use std::path::Path;

use roomvol_core::room::{
    sample_room, save_rir, schroeder_rt60, simulate_shoebox_rir, Provenance,
};
use roomvol_core::{mix_seed, Result};

use crate::config::RunConfig;
use crate::lock::DirLock;

pub fn run(cfg: &RunConfig, out: &Path, provenance: Provenance) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    cfg.write_resolved(out, "simulate")?;
    println!("id          volume_m3   rt60_nominal_s  rt60_schroeder_s");
    for i in 0..cfg.simulate.rooms {
        let spec = sample_room(
            cfg.simulate.volume_range,
            cfg.simulate.rt60_range,
            mix_seed(cfg.seed, i as u64),
        )?;
        let mut rir = simulate_shoebox_rir(&spec)?;
        rir.meta.provenance = provenance;
        let id = format!("room{i:04}");
        let record = save_rir(out, &spec, &rir, &id)?;
        let schroeder = schroeder_rt60(&rir)
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|_| "n/a".to_string());
        println!(
            "{id}    {:9.1}   {:8.3}        {schroeder}",
            record.volume_m3, record.rt60_nominal_s
        );
    }
    println!("wrote {} RIR records to {}", cfg.simulate.rooms, out.display());
    Ok(())
}
