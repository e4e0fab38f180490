//! Model configuration, parameter tensors and initialization.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::grid::PatchGrid;
use crate::speech::gauss;

/// Architecture and label-mapping configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_f: usize,
    pub input_t: usize,
    pub patch: (usize, usize),
    pub stride: (usize, usize),
    /// Embedding width.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    /// MLP hidden size = width * mlp_ratio.
    pub mlp_ratio: usize,
    pub dropout: f64,
    /// (log10 Vmin, log10 Vmax): the sigmoid output maps affinely onto this.
    pub label_map: (f64, f64),
}

impl ModelConfig {
    /// Full-scale profile: 30x1997 input, ViT-Base-like encoder.
    pub fn full() -> Self {
        Self {
            input_f: 30,
            input_t: 1997,
            patch: (16, 16),
            stride: (10, 10),
            width: 768,
            layers: 12,
            heads: 12,
            mlp_ratio: 4,
            dropout: 0.1,
            label_map: (1.0, 4.5),
        }
    }

    /// Desk profile used by CI: same structure, width 64, 2 layers.
    pub fn desk() -> Self {
        Self {
            width: 64,
            layers: 2,
            heads: 4,
            ..Self::full()
        }
    }

    /// Tiny profile for gradient checking: width 16, 1 layer, 2 heads,
    /// 6x26 input with 4x4 patches.
    pub fn grad_check() -> Self {
        Self {
            input_f: 6,
            input_t: 26,
            patch: (4, 4),
            stride: (2, 2),
            width: 16,
            layers: 1,
            heads: 2,
            mlp_ratio: 2,
            dropout: 0.0,
            label_map: (1.0, 4.5),
        }
    }

    pub fn grid(&self) -> Result<PatchGrid> {
        PatchGrid::new(self.input_f, self.input_t, self.patch, self.stride)
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.width * self.mlp_ratio
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::parameter(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.layers == 0 || self.mlp_ratio == 0 {
            return Err(Error::parameter("layers and mlp_ratio must be positive"));
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(Error::parameter(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if !(self.label_map.0 < self.label_map.1) {
            return Err(Error::parameter(format!(
                "label map {:?} must be increasing",
                self.label_map
            )));
        }
        self.grid()?;
        Ok(())
    }
}

/// Per-layer encoder weights. Linear maps are stored input-major so the
/// forward pass is `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub mlp_w1: Array2<f64>,
    pub mlp_b1: Array1<f64>,
    pub mlp_w2: Array2<f64>,
    pub mlp_b2: Array1<f64>,
}

/// All trainable tensors of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// patch_dim x width.
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub cls: Array1<f64>,
    /// (patches + 1) x width.
    pub pos: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl ModelParams {
    /// Random initialization: N(0, 0.02^2) weights, zero biases, unit
    /// layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let grid = config.grid()?;
        let d = config.width;
        let pd = grid.patch_dim();
        let hidden = config.mlp_hidden();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal2 =
            |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| 0.02 * gauss(&mut rng));
        let proj_w = normal2(pd, d);
        let pos = normal2(grid.patches() + 1, d);
        let cls_m = normal2(1, d);
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(LayerParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: normal2(d, d),
                bq: Array1::zeros(d),
                wk: normal2(d, d),
                bk: Array1::zeros(d),
                wv: normal2(d, d),
                bv: Array1::zeros(d),
                wo: normal2(d, d),
                bo: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                mlp_w1: normal2(d, hidden),
                mlp_b1: Array1::zeros(hidden),
                mlp_w2: normal2(hidden, d),
                mlp_b2: Array1::zeros(d),
            });
        }
        let head_w = normal2(1, d).row(0).to_owned();
        Ok(ModelParams {
            config: config.clone(),
            proj_w,
            proj_b: Array1::zeros(d),
            cls: cls_m.row(0).to_owned(),
            pos,
            layers,
            head_w,
            head_b: 0.0,
        })
    }

    /// Same shapes, all values zero. Used for gradients and optimizer state.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visits every tensor as a flat slice, in the canonical checkpoint
    /// order.
    pub fn visit<F: FnMut(&str, &[f64])>(&self, mut f: F) {
        f("proj_w", self.proj_w.as_slice().unwrap());
        f("proj_b", self.proj_b.as_slice().unwrap());
        f("cls", self.cls.as_slice().unwrap());
        f("pos", self.pos.as_slice().unwrap());
        for (i, l) in self.layers.iter().enumerate() {
            let pfx = format!("layer{i}");
            f(&format!("{pfx}.ln1_g"), l.ln1_g.as_slice().unwrap());
            f(&format!("{pfx}.ln1_b"), l.ln1_b.as_slice().unwrap());
            f(&format!("{pfx}.wq"), l.wq.as_slice().unwrap());
            f(&format!("{pfx}.bq"), l.bq.as_slice().unwrap());
            f(&format!("{pfx}.wk"), l.wk.as_slice().unwrap());
            f(&format!("{pfx}.bk"), l.bk.as_slice().unwrap());
            f(&format!("{pfx}.wv"), l.wv.as_slice().unwrap());
            f(&format!("{pfx}.bv"), l.bv.as_slice().unwrap());
            f(&format!("{pfx}.wo"), l.wo.as_slice().unwrap());
            f(&format!("{pfx}.bo"), l.bo.as_slice().unwrap());
            f(&format!("{pfx}.ln2_g"), l.ln2_g.as_slice().unwrap());
            f(&format!("{pfx}.ln2_b"), l.ln2_b.as_slice().unwrap());
            f(&format!("{pfx}.mlp_w1"), l.mlp_w1.as_slice().unwrap());
            f(&format!("{pfx}.mlp_b1"), l.mlp_b1.as_slice().unwrap());
            f(&format!("{pfx}.mlp_w2"), l.mlp_w2.as_slice().unwrap());
            f(&format!("{pfx}.mlp_b2"), l.mlp_b2.as_slice().unwrap());
        }
        f("head_w", self.head_w.as_slice().unwrap());
        f("head_b", std::slice::from_ref(&self.head_b));
    }

    /// Mutable variant of [`visit`](Self::visit), same order.
    pub fn visit_mut<F: FnMut(&str, &mut [f64])>(&mut self, mut f: F) {
        f("proj_w", self.proj_w.as_slice_mut().unwrap());
        f("proj_b", self.proj_b.as_slice_mut().unwrap());
        f("cls", self.cls.as_slice_mut().unwrap());
        f("pos", self.pos.as_slice_mut().unwrap());
        for (i, l) in self.layers.iter_mut().enumerate() {
            let pfx = format!("layer{i}");
            f(&format!("{pfx}.ln1_g"), l.ln1_g.as_slice_mut().unwrap());
            f(&format!("{pfx}.ln1_b"), l.ln1_b.as_slice_mut().unwrap());
            f(&format!("{pfx}.wq"), l.wq.as_slice_mut().unwrap());
            f(&format!("{pfx}.bq"), l.bq.as_slice_mut().unwrap());
            f(&format!("{pfx}.wk"), l.wk.as_slice_mut().unwrap());
            f(&format!("{pfx}.bk"), l.bk.as_slice_mut().unwrap());
            f(&format!("{pfx}.wv"), l.wv.as_slice_mut().unwrap());
            f(&format!("{pfx}.bv"), l.bv.as_slice_mut().unwrap());
            f(&format!("{pfx}.wo"), l.wo.as_slice_mut().unwrap());
            f(&format!("{pfx}.bo"), l.bo.as_slice_mut().unwrap());
            f(&format!("{pfx}.ln2_g"), l.ln2_g.as_slice_mut().unwrap());
            f(&format!("{pfx}.ln2_b"), l.ln2_b.as_slice_mut().unwrap());
            f(&format!("{pfx}.mlp_w1"), l.mlp_w1.as_slice_mut().unwrap());
            f(&format!("{pfx}.mlp_b1"), l.mlp_b1.as_slice_mut().unwrap());
            f(&format!("{pfx}.mlp_w2"), l.mlp_w2.as_slice_mut().unwrap());
            f(&format!("{pfx}.mlp_b2"), l.mlp_b2.as_slice_mut().unwrap());
        }
        f("head_w", self.head_w.as_slice_mut().unwrap());
        f("head_b", std::slice::from_mut(&mut self.head_b));
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    /// In-place `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        self.proj_w.scaled_add(scale, &other.proj_w);
        self.proj_b.scaled_add(scale, &other.proj_b);
        self.cls.scaled_add(scale, &other.cls);
        self.pos.scaled_add(scale, &other.pos);
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.ln1_g.scaled_add(scale, &b.ln1_g);
            a.ln1_b.scaled_add(scale, &b.ln1_b);
            a.wq.scaled_add(scale, &b.wq);
            a.bq.scaled_add(scale, &b.bq);
            a.wk.scaled_add(scale, &b.wk);
            a.bk.scaled_add(scale, &b.bk);
            a.wv.scaled_add(scale, &b.wv);
            a.bv.scaled_add(scale, &b.bv);
            a.wo.scaled_add(scale, &b.wo);
            a.bo.scaled_add(scale, &b.bo);
            a.ln2_g.scaled_add(scale, &b.ln2_g);
            a.ln2_b.scaled_add(scale, &b.ln2_b);
            a.mlp_w1.scaled_add(scale, &b.mlp_w1);
            a.mlp_b1.scaled_add(scale, &b.mlp_b1);
            a.mlp_w2.scaled_add(scale, &b.mlp_w2);
            a.mlp_b2.scaled_add(scale, &b.mlp_b2);
        }
        self.head_w.scaled_add(scale, &other.head_w);
        self.head_b += scale * other.head_b;
    }

    pub fn scale(&mut self, s: f64) {
        self.visit_mut(|_, t| t.iter_mut().for_each(|v| *v *= s));
    }

    /// All tensors concatenated in visit order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.visit(|_, t| out.extend_from_slice(t));
        out
    }
}
