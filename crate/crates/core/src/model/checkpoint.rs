//! RVCK checkpoint container and the pretrained-weight import path.
//!
//! Layout: magic `RVCK`, u32 LE version, u32 LE header length, JSON header,
//! then the declared tensors as raw float32 little-endian values. The same
//! container carries regular checkpoints (`kind: "checkpoint"`) and foreign
//! pretrained tensors for adaptation (`kind: "import"`).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RowStats;
use crate::model::adapt::{adapt_channel_average, interpolate_positional};
use crate::model::params::{ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"RVCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: Option<ModelConfig>,
    row_stats: Option<RowStats>,
    /// Source patch grid (n_f, n_t) for import files.
    src_grid: Option<(usize, usize)>,
    tensors: Vec<(String, Vec<usize>)>,
}

/// A loaded checkpoint: parameters plus the training-time feature
/// standardization statistics.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub row_stats: Option<RowStats>,
}

fn write_container(path: &Path, header: &Header, tensors: &[&[f64]]) -> Result<()> {
    let header_json = serde_json::to_vec(header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for t in tensors {
        for &v in *t {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_container(path: &Path) -> Result<(Header, Vec<Vec<f64>>)> {
    let mut f = std::fs::File::open(path)?;
    let mut head = [0u8; 12];
    f.read_exact(&mut head)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated header", path.display())))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {version} unsupported (expected {VERSION})",
            path.display()
        )));
    }
    let header_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut header_json = vec![0u8; header_len];
    f.read_exact(&mut header_json)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated JSON header", path.display())))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Checkpoint(format!("{}: header: {e}", path.display())))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for (name, shape) in &header.tensors {
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        f.read_exact(&mut bytes).map_err(|_| {
            Error::Checkpoint(format!("{}: tensor {name} truncated", path.display()))
        })?;
        tensors.push(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        );
    }
    Ok((header, tensors))
}

/// Saves parameters and standardization stats as an RVCK checkpoint.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    row_stats: Option<&RowStats>,
) -> Result<()> {
    let mut names = Vec::new();
    let mut owned: Vec<Vec<f64>> = Vec::new();
    params.visit(|name, t| {
        names.push((name.to_string(), vec![t.len()]));
        owned.push(t.to_vec());
    });
    let slices: Vec<&[f64]> = owned.iter().map(|v| v.as_slice()).collect();
    let header = Header {
        kind: "checkpoint".into(),
        config: Some(params.config.clone()),
        row_stats: row_stats.cloned(),
        src_grid: None,
        tensors: names,
    };
    write_container(path.as_ref(), &header, &slices)
}

/// Loads an RVCK checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let (header, tensors) = read_container(path.as_ref())?;
    if header.kind != "checkpoint" {
        return Err(Error::Checkpoint(format!(
            "{}: kind {:?} is not a checkpoint",
            path.as_ref().display(),
            header.kind
        )));
    }
    let config = header
        .config
        .ok_or_else(|| Error::Checkpoint("checkpoint missing model config".into()))?;
    let mut params = ModelParams::init(&config, 0)?;
    let mut idx = 0;
    let mut shape_err = None;
    params.visit_mut(|name, t| {
        if shape_err.is_some() {
            return;
        }
        match tensors.get(idx) {
            Some(data) if data.len() == t.len() => t.copy_from_slice(data),
            Some(data) => {
                shape_err = Some(format!(
                    "tensor {name}: expected {} values, found {}",
                    t.len(),
                    data.len()
                ))
            }
            None => shape_err = Some(format!("tensor {name} missing")),
        }
        idx += 1;
    });
    if let Some(msg) = shape_err {
        return Err(Error::Checkpoint(msg));
    }
    if idx != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint carries {} tensors, model expects {idx}",
            tensors.len()
        )));
    }
    Ok(Checkpoint {
        params,
        row_stats: header.row_stats,
    })
}

/// Writes an import file carrying a 3-channel patch projection, its bias, a
/// positional table for `src_grid`, and a class token.
pub fn save_import_file(
    path: impl AsRef<Path>,
    proj_w3: &Array3<f64>,
    proj_b: &Array1<f64>,
    pos: &Array2<f64>,
    cls: &Array1<f64>,
    src_grid: (usize, usize),
) -> Result<()> {
    if proj_w3.dim().0 != 3 {
        return Err(Error::parameter("import projection must have 3 channels"));
    }
    if pos.nrows() != src_grid.0 * src_grid.1 + 1 {
        return Err(Error::parameter(format!(
            "positional rows {} do not match grid {:?}",
            pos.nrows(),
            src_grid
        )));
    }
    let header = Header {
        kind: "import".into(),
        config: None,
        row_stats: None,
        src_grid: Some(src_grid),
        tensors: vec![
            ("proj_w3".into(), proj_w3.shape().to_vec()),
            ("proj_b".into(), vec![proj_b.len()]),
            ("pos".into(), pos.shape().to_vec()),
            ("cls".into(), vec![cls.len()]),
        ],
    };
    write_container(
        path.as_ref(),
        &header,
        &[
            proj_w3.as_slice().unwrap(),
            proj_b.as_slice().unwrap(),
            pos.as_slice().unwrap(),
            cls.as_slice().unwrap(),
        ],
    )
}

/// Builds model parameters from a foreign pretrained import: averages the
/// projection channels, resizes the positional table onto the target grid,
/// copies the class token, and leaves the encoder and the freshly
/// reinitialized head at their `seed` initialization.
pub fn import_pretrained(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    seed: u64,
) -> Result<ModelParams> {
    let (header, tensors) = read_container(path.as_ref())?;
    if header.kind != "import" {
        return Err(Error::Checkpoint(format!(
            "{}: kind {:?} is not an import file",
            path.as_ref().display(),
            header.kind
        )));
    }
    let src_grid = header
        .src_grid
        .ok_or_else(|| Error::Checkpoint("import missing src_grid".into()))?;
    if header.tensors.len() != 4 || tensors.len() != 4 {
        return Err(Error::Checkpoint("import must carry exactly 4 tensors".into()));
    }
    let shape_of = |i: usize| header.tensors[i].1.clone();

    let w3_shape = shape_of(0);
    if w3_shape.len() != 3 {
        return Err(Error::Checkpoint("proj_w3 must be 3-dimensional".into()));
    }
    let proj_w3 = Array3::from_shape_vec(
        (w3_shape[0], w3_shape[1], w3_shape[2]),
        tensors[0].clone(),
    )
    .map_err(|e| Error::Checkpoint(format!("proj_w3: {e}")))?;
    let proj_b = Array1::from_vec(tensors[1].clone());
    let pos_shape = shape_of(2);
    let pos = Array2::from_shape_vec((pos_shape[0], pos_shape[1]), tensors[2].clone())
        .map_err(|e| Error::Checkpoint(format!("pos: {e}")))?;
    let cls = Array1::from_vec(tensors[3].clone());

    let grid = config.grid()?;
    let (w1, b1) = adapt_channel_average(&proj_w3, &proj_b)?;
    if w1.dim() != (grid.patch_dim(), config.width) {
        return Err(Error::Checkpoint(format!(
            "projection {:?} incompatible with grid patch_dim {} width {}",
            w1.dim(),
            grid.patch_dim(),
            config.width
        )));
    }
    if cls.len() != config.width || pos.ncols() != config.width {
        return Err(Error::Checkpoint("import width mismatch".into()));
    }
    let pos_tgt = interpolate_positional(&pos, src_grid, (grid.n_f, grid.n_t))?;

    let mut params = ModelParams::init(config, seed)?;
    params.proj_w = w1;
    params.proj_b = b1;
    params.pos = pos_tgt;
    params.cls = cls;
    Ok(params)
}
