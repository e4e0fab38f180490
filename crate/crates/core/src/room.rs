//! Shoebox room simulation via the image-source method, Sabine-equation
//! utilities, Schroeder RT60 estimation, and the WAV+JSON RIR store.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Half-width of the windowed-sinc fractional-delay kernel (81 taps total).
const SINC_HALF: i64 = 40;
/// Minimum source/mic clearance from any wall, in meters.
pub const WALL_CLEARANCE: f64 = 0.5;
/// Minimum source-mic separation, in meters.
pub const MIN_SEPARATION: f64 = 0.3;

/// Where an RIR came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Simulated,
    External,
}

/// A shoebox room with uniform broadband absorption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Room dimensions (Lx, Ly, Lz) in meters.
    pub dims: [f64; 3],
    /// Broadband absorption coefficient, uniform over all six walls.
    pub absorption: f64,
    pub source: [f64; 3],
    pub mic: [f64; 3],
    pub fs: u32,
    /// Maximum image-source reflection order.
    pub max_order: u32,
}

impl RoomSpec {
    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn surface(&self) -> f64 {
        let [a, b, c] = self.dims;
        2.0 * (a * b + b * c + a * c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::parameter(format!("non-positive dims {:?}", self.dims)));
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::parameter(format!(
                "absorption {} outside (0, 1]",
                self.absorption
            )));
        }
        for (name, p) in [("source", &self.source), ("mic", &self.mic)] {
            for axis in 0..3 {
                if !(p[axis] > 0.0 && p[axis] < self.dims[axis]) {
                    return Err(Error::parameter(format!(
                        "{name} position {:?} outside room {:?}",
                        p, self.dims
                    )));
                }
            }
        }
        if distance(&self.source, &self.mic) == 0.0 {
            return Err(Error::parameter("source and mic coincide"));
        }
        Ok(())
    }
}

/// Room metadata attached to an impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomMeta {
    pub volume_m3: f64,
    pub surface_m2: f64,
    pub rt60_nominal_s: f64,
    pub provenance: Provenance,
    pub label_log10_volume: f64,
}

/// An impulse response with its room metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub fs: u32,
    pub meta: RoomMeta,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Sabine's relation: RT60 = 0.16 V / (alpha S).
pub fn sabine_rt60(volume: f64, surface: f64, alpha: f64) -> Result<f64> {
    if !(volume > 0.0 && surface > 0.0 && alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::parameter(format!(
            "sabine inputs out of range: V={volume} S={surface} alpha={alpha}"
        )));
    }
    Ok(0.16 * volume / (alpha * surface))
}

/// Inverts Sabine's relation for a target RT60, clamping the coefficient to
/// (0.01, 0.99]. Returns the coefficient and whether clamping applied.
pub fn alpha_for_target_rt60(volume: f64, surface: f64, rt60: f64) -> Result<(f64, bool)> {
    if !(volume > 0.0 && surface > 0.0 && rt60 > 0.0) {
        return Err(Error::parameter(format!(
            "inputs out of range: V={volume} S={surface} rt60={rt60}"
        )));
    }
    let alpha = 0.16 * volume / (rt60 * surface);
    if alpha > 0.99 {
        Ok((0.99, true))
    } else if alpha <= 0.01 {
        Ok((0.01, true))
    } else {
        Ok((alpha, false))
    }
}

fn windowed_sinc(x: f64) -> f64 {
    if x.abs() > SINC_HALF as f64 + 0.5 {
        return 0.0;
    }
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    // Hann window spanning the 81-tap kernel.
    let w = 0.5 * (1.0 + (2.0 * PI * x / (2 * SINC_HALF + 1) as f64).cos());
    sinc * w
}

/// Simulates a shoebox RIR with the image-source method.
///
/// Every image up to `max_order` contributes an impulse of amplitude
/// `beta^order / (4 pi d)` at delay `d / c`, realized by an 81-tap
/// windowed-sinc fractional-delay kernel. The reflection coefficient per
/// wall is `sqrt(1 - alpha)`.
pub fn simulate_shoebox_rir(spec: &RoomSpec) -> Result<Rir> {
    spec.validate()?;
    let fs = spec.fs as f64;
    let beta = (1.0 - spec.absorption).sqrt();
    let order = spec.max_order as i64;
    let m_max = (order + 1) / 2 + 1;

    // Pass 1: collect arrivals (delay in samples, amplitude).
    let mut arrivals: Vec<(f64, f64)> = Vec::new();
    for mx in -m_max..=m_max {
        for q in 0..=1i64 {
            let ox = (2 * mx - q).abs();
            if ox > order {
                continue;
            }
            let img_x = (1 - 2 * q) as f64 * spec.source[0] + 2.0 * mx as f64 * spec.dims[0];
            for my in -m_max..=m_max {
                for j in 0..=1i64 {
                    let oy = (2 * my - j).abs();
                    if ox + oy > order {
                        continue;
                    }
                    let img_y =
                        (1 - 2 * j) as f64 * spec.source[1] + 2.0 * my as f64 * spec.dims[1];
                    for mz in -m_max..=m_max {
                        for k in 0..=1i64 {
                            let oz = (2 * mz - k).abs();
                            if ox + oy + oz > order {
                                continue;
                            }
                            let img_z = (1 - 2 * k) as f64 * spec.source[2]
                                + 2.0 * mz as f64 * spec.dims[2];
                            let d = ((img_x - spec.mic[0]).powi(2)
                                + (img_y - spec.mic[1]).powi(2)
                                + (img_z - spec.mic[2]).powi(2))
                            .sqrt();
                            let amp = beta.powi((ox + oy + oz) as i32) / (4.0 * PI * d);
                            arrivals.push((d / SPEED_OF_SOUND * fs, amp));
                        }
                    }
                }
            }
        }
    }

    let rt60_nominal = sabine_rt60(spec.volume(), spec.surface(), spec.absorption)?;
    let max_delay = arrivals.iter().fold(0.0_f64, |m, &(d, _)| m.max(d));
    let n_samples = ((rt60_nominal * fs).ceil() as usize)
        .max(max_delay.ceil() as usize + SINC_HALF as usize + 1);

    // Pass 2: place band-limited impulses.
    let mut taps = vec![0.0; n_samples];
    for &(delay, amp) in &arrivals {
        let lo = (delay - SINC_HALF as f64).ceil() as i64;
        let hi = (delay + SINC_HALF as f64).floor() as i64;
        for kk in lo.max(0)..=hi.min(n_samples as i64 - 1) {
            taps[kk as usize] += amp * windowed_sinc(kk as f64 - delay);
        }
    }

    let volume = spec.volume();
    Ok(Rir {
        taps,
        fs: spec.fs,
        meta: RoomMeta {
            volume_m3: volume,
            surface_m2: spec.surface(),
            rt60_nominal_s: rt60_nominal,
            provenance: Provenance::Simulated,
            label_log10_volume: volume.log10(),
        },
    })
}

/// Estimates RT60 from the Schroeder backward-integrated energy curve via a
/// least-squares line over the -5 dB to -25 dB span, extrapolated to 60 dB.
pub fn schroeder_rt60(rir: &Rir) -> Result<f64> {
    let energy: Vec<f64> = rir.taps.iter().map(|&x| x * x).collect();
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Estimation("RIR carries no energy".into()));
    }
    // Backward integration.
    let mut edc = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for (i, &e) in energy.iter().enumerate().rev() {
        acc += e;
        edc[i] = acc;
    }
    let fs = rir.fs as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in edc.iter().enumerate() {
        if v <= 0.0 {
            break;
        }
        let db = 10.0 * (v / total).log10();
        if db <= -5.0 && db >= -25.0 {
            xs.push(i as f64 / fs);
            ys.push(db);
        }
        if db < -25.0 {
            break;
        }
    }
    if xs.len() < 4 {
        return Err(Error::Estimation(
            "decay range -5..-25 dB not reached".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Estimation("degenerate decay fit".into()));
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(Error::Estimation("energy curve is not decaying".into()));
    }
    Ok(-60.0 / slope)
}

/// Draws a random shoebox room: log-uniform volume, per-axis aspect ratios
/// in [1, 3], absorption set from a uniform RT60 target, and source/mic
/// placed with wall clearance and minimum separation.
pub fn sample_room(
    volume_range: (f64, f64),
    rt60_range: (f64, f64),
    seed: u64,
) -> Result<RoomSpec> {
    let (v_lo, v_hi) = volume_range;
    let (t_lo, t_hi) = rt60_range;
    if !(v_lo > 0.0 && v_hi >= v_lo && t_lo > 0.0 && t_hi >= t_lo) {
        return Err(Error::parameter(format!(
            "invalid ranges: volume {volume_range:?}, rt60 {rt60_range:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volume = (rng.random_range(v_lo.ln()..=v_hi.ln())).exp();

    let mut dims = None;
    for _ in 0..64 {
        let ry = rng.random_range(1.0..=3.0);
        let rz = rng.random_range(1.0..=3.0);
        let base = (volume / (ry * rz)).cbrt();
        let mut d = [base, base * ry, base * rz];
        d.shuffle(&mut rng);
        if d.iter().all(|&x| x > 2.0 * WALL_CLEARANCE + 0.05) {
            dims = Some(d);
            break;
        }
    }
    let dims = dims.ok_or_else(|| {
        Error::parameter(format!(
            "volume {volume:.2} m3 cannot satisfy wall clearance {WALL_CLEARANCE} m"
        ))
    })?;

    let rt60_target = rng.random_range(t_lo..=t_hi);
    let [lx, ly, lz] = dims;
    let surface = 2.0 * (lx * ly + ly * lz + lx * lz);
    let (alpha, _clamped) = alpha_for_target_rt60(volume, surface, rt60_target)?;

    let draw_pos = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        [
            rng.random_range(WALL_CLEARANCE..=lx - WALL_CLEARANCE),
            rng.random_range(WALL_CLEARANCE..=ly - WALL_CLEARANCE),
            rng.random_range(WALL_CLEARANCE..=lz - WALL_CLEARANCE),
        ]
    };
    let mut placed = None;
    for _ in 0..64 {
        let source = draw_pos(&mut rng);
        let mic = draw_pos(&mut rng);
        if distance(&source, &mic) >= MIN_SEPARATION {
            placed = Some((source, mic));
            break;
        }
    }
    let (source, mic) = placed.ok_or_else(|| {
        Error::parameter("could not place source and mic with required separation")
    })?;

    // Enough reflection orders for the energy to decay through the
    // Schroeder fit range within the room's own dimensions.
    let min_dim = dims.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_order = ((SPEED_OF_SOUND * rt60_target / min_dim).ceil() as u32 + 2).min(64);

    Ok(RoomSpec {
        dims,
        absorption: alpha,
        source,
        mic,
        fs: crate::audio::SAMPLE_RATE,
        max_order,
    })
}

// ---------------------------------------------------------------------------
// RIR store: one float32 WAV per response plus a JSON sidecar.
// ---------------------------------------------------------------------------

/// Sidecar record describing one stored RIR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirRecord {
    pub id: String,
    pub volume_m3: f64,
    pub surface_m2: f64,
    pub rt60_nominal_s: f64,
    pub provenance: Provenance,
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    pub dims: [f64; 3],
    /// Groups multiple source/mic positions measured in the same room.
    /// Absent records fall back to a geometry fingerprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_id: Option<String>,
}

impl RirRecord {
    /// Key used for room-disjoint dataset splits.
    pub fn room_key(&self) -> String {
        match &self.room_id {
            Some(id) => id.clone(),
            None => format!(
                "geom:{:.3}x{:.3}x{:.3}:{:.3}",
                self.dims[0], self.dims[1], self.dims[2], self.volume_m3
            ),
        }
    }
}

/// A stored RIR reference: sidecar record plus the WAV path.
#[derive(Debug, Clone)]
pub struct StoredRir {
    pub record: RirRecord,
    pub wav_path: PathBuf,
}

impl StoredRir {
    pub fn load(&self) -> Result<Rir> {
        let clip = AudioClip::read_wav(&self.wav_path)?;
        Ok(Rir {
            taps: clip.samples,
            fs: clip.sample_rate,
            meta: RoomMeta {
                volume_m3: self.record.volume_m3,
                surface_m2: self.record.surface_m2,
                rt60_nominal_s: self.record.rt60_nominal_s,
                provenance: self.record.provenance,
                label_log10_volume: self.record.volume_m3.log10(),
            },
        })
    }
}

/// Writes `{id}.wav` and `{id}.json` into `dir`.
pub fn save_rir(dir: impl AsRef<Path>, spec: &RoomSpec, rir: &Rir, id: &str) -> Result<RirRecord> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let record = RirRecord {
        id: id.to_string(),
        volume_m3: rir.meta.volume_m3,
        surface_m2: rir.meta.surface_m2,
        rt60_nominal_s: rir.meta.rt60_nominal_s,
        provenance: rir.meta.provenance,
        source_pos: spec.source,
        mic_pos: spec.mic,
        dims: spec.dims,
        room_id: Some(id.to_string()),
    };
    AudioClip::new(rir.taps.clone(), rir.fs).write_wav(dir.join(format!("{id}.wav")))?;
    let json = serde_json::to_string_pretty(&record)?;
    std::fs::write(dir.join(format!("{id}.json")), json)?;
    Ok(record)
}

/// Loads all sidecar records in a store directory, sorted by id. A JSON
/// file counts as a sidecar only when a sibling WAV of the same stem
/// exists, so unrelated JSON outputs in the directory are ignored.
pub fn load_rir_store(dir: impl AsRef<Path>) -> Result<Vec<StoredRir>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let wav_path = path.with_extension("wav");
        if !wav_path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let record: RirRecord = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        out.push(StoredRir { record, wav_path });
    }
    out.sort_by(|a, b| a.record.id.cmp(&b.record.id));
    Ok(out)
}
