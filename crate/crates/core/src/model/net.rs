//! Forward and backward passes of the attention-based patch regressor.
//!
//! Layout: overlapping patches are linearly projected to the embedding
//! width, a learned class token is prepended, positional embeddings are
//! added, and a stack of pre-norm encoder layers (self-attention then MLP,
//! residual connections) feeds a sigmoid head read from the class token.
//! Gradients are computed analytically for every parameter tensor.

use ndarray::{s, Array1, Array2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureBlock;
use crate::model::grid::patchify;
use crate::model::params::{LayerParams, ModelParams};

const LN_EPS: f64 = 1e-5;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// tanh-form GELU; returns (value, tanh term) so the backward pass can
/// reuse the tanh.
fn gelu_with_tanh(x: f64) -> (f64, f64) {
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    (0.5 * x * (1.0 + t), t)
}

/// GELU derivative from the cached tanh term.
fn gelu_prime_cached(x: f64, t: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise layer norm; returns (normalized*g+b, xhat, inv_std).
fn layer_norm(
    x: &Array2<f64>,
    g: &Array1<f64>,
    b: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        let isl = *is;
        row.mapv_inplace(|v| v * isl);
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        for (v, (&gg, &bb)) in row.iter_mut().zip(g.iter().zip(b.iter())) {
            *v = *v * gg + bb;
        }
    }
    (y, xhat, inv_std)
}

/// Backward through layer norm. Returns dx and accumulates dg, db.
fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    for (dy_row, xh_row) in dy.rows().into_iter().zip(xhat.rows()) {
        for k in 0..dy.ncols() {
            dg[k] += dy_row[k] * xh_row[k];
            db[k] += dy_row[k];
        }
    }
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dy_row = dy.row(i);
        let xh_row = xhat.row(i);
        let mut m1 = 0.0; // mean of dxhat
        let mut m2 = 0.0; // mean of dxhat .* xhat
        for k in 0..dy.ncols() {
            let dxh = dy_row[k] * g[k];
            m1 += dxh;
            m2 += dxh * xh_row[k];
        }
        m1 /= d;
        m2 /= d;
        for k in 0..dy.ncols() {
            let dxh = dy_row[k] * g[k];
            dx[[i, k]] = inv_std[i] * (dxh - m1 - xh_row[k] * m2);
        }
    }
    dx
}

/// Inverted-dropout mask: entries are 0 or 1/keep.
fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

struct LayerCache {
    ln1_xhat: Array2<f64>,
    ln1_inv_std: Array1<f64>,
    ln1_out: Array2<f64>,
    /// Per-head query/key/value blocks, each n x head_dim, contiguous.
    q_heads: Vec<Array2<f64>>,
    k_heads: Vec<Array2<f64>>,
    v_heads: Vec<Array2<f64>>,
    /// Per-head post-softmax attention probabilities (pre-dropout).
    attn: Vec<Array2<f64>>,
    attn_mask: Option<Vec<Array2<f64>>>,
    /// Concatenated per-head context, before the output projection.
    context: Array2<f64>,
    ln2_xhat: Array2<f64>,
    ln2_inv_std: Array1<f64>,
    ln2_out: Array2<f64>,
    /// Pre-GELU MLP activations.
    h_pre: Array2<f64>,
    /// tanh terms cached by the GELU forward.
    h_tanh: Array2<f64>,
    /// Post-GELU (and post-dropout) hidden activations.
    h_act: Array2<f64>,
    mlp_mask: Option<Array2<f64>>,
}

/// Intermediates retained by [`forward_with`] for the backward pass.
pub struct ForwardCache {
    patches: Array2<f64>,
    tokens_id: u64,
    layers: Vec<LayerCache>,
    x_final: Array2<f64>,
    y: f64,
}

impl ForwardCache {
    pub fn output(&self) -> f64 {
        self.y
    }
}

fn add_bias(mut x: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    for mut row in x.rows_mut() {
        row += b;
    }
    x
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Runs the encoder stack and head over assembled tokens.
fn run_encoder(
    params: &ModelParams,
    mut x: Array2<f64>,
    mut drop_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<LayerCache>, Array2<f64>)> {
    let cfg = &params.config;
    let n = x.nrows();
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let dropout = cfg.dropout;

    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for (li, layer) in params.layers.iter().enumerate() {
        let x_in = x;
        let (ln1_out, ln1_xhat, ln1_inv_std) = layer_norm(&x_in, &layer.ln1_g, &layer.ln1_b);
        let q = add_bias(ln1_out.dot(&layer.wq), &layer.bq);
        let k = add_bias(ln1_out.dot(&layer.wk), &layer.bk);
        let v = add_bias(ln1_out.dot(&layer.wv), &layer.bv);

        let mut attn = Vec::with_capacity(heads);
        let mut attn_mask: Option<Vec<Array2<f64>>> = if drop_rng.is_some() && dropout > 0.0 {
            Some(Vec::with_capacity(heads))
        } else {
            None
        };
        let mut context = Array2::zeros((n, cfg.width));
        let mut q_heads = Vec::with_capacity(heads);
        let mut k_heads = Vec::with_capacity(heads);
        let mut v_heads = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols).to_owned();
            let kh = k.slice(cols).to_owned();
            let vh = v.slice(cols).to_owned();
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|s| s * scale);
            softmax_rows(&mut scores);
            let probs = scores;
            let used = if let (Some(rng), Some(masks)) = (drop_rng.as_deref_mut(), attn_mask.as_mut())
            {
                let mask = dropout_mask((n, n), dropout, rng);
                let dropped = &probs * &mask;
                masks.push(mask);
                dropped
            } else {
                probs.clone()
            };
            context.slice_mut(cols).assign(&used.dot(&vh));
            attn.push(probs);
            q_heads.push(qh);
            k_heads.push(kh);
            v_heads.push(vh);
        }
        let attn_out = add_bias(context.dot(&layer.wo), &layer.bo);
        let x_mid = &x_in + &attn_out;

        let (ln2_out, ln2_xhat, ln2_inv_std) = layer_norm(&x_mid, &layer.ln2_g, &layer.ln2_b);
        let h_pre = add_bias(ln2_out.dot(&layer.mlp_w1), &layer.mlp_b1);
        let mut h_tanh = Array2::zeros(h_pre.raw_dim());
        let mut h_act = Array2::zeros(h_pre.raw_dim());
        ndarray::Zip::from(&mut h_act)
            .and(&mut h_tanh)
            .and(&h_pre)
            .for_each(|a, t, &x| {
                let (v, th) = gelu_with_tanh(x);
                *a = v;
                *t = th;
            });
        let mlp_mask = if let Some(rng) = drop_rng.as_deref_mut() {
            if dropout > 0.0 {
                let mask = dropout_mask(h_act.dim(), dropout, rng);
                h_act = &h_act * &mask;
                Some(mask)
            } else {
                None
            }
        } else {
            None
        };
        let mlp_out = add_bias(h_act.dot(&layer.mlp_w2), &layer.mlp_b2);
        x = &x_mid + &mlp_out;

        if !x.sum().is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite activations after encoder layer {li}"
            )));
        }

        drop((q, k, v));
        layer_caches.push(LayerCache {
            ln1_xhat,
            ln1_inv_std,
            ln1_out,
            q_heads,
            k_heads,
            v_heads,
            attn,
            attn_mask,
            context,
            ln2_xhat,
            ln2_inv_std,
            ln2_out,
            h_pre,
            h_tanh,
            h_act,
            mlp_mask,
        });
    }

    let cls_final = x.row(0);
    let y = sigmoid(cls_final.dot(&params.head_w) + params.head_b);
    if !y.is_finite() {
        return Err(Error::Numerical("non-finite head output".into()));
    }
    Ok((y, layer_caches, x))
}

/// Assembles tokens: class token, projected patches, positional table.
fn assemble_tokens(params: &ModelParams, patches: &Array2<f64>) -> Array2<f64> {
    let n = patches.nrows() + 1;
    let d = params.config.width;
    let emb = add_bias(patches.dot(&params.proj_w), &params.proj_b);
    let mut x = Array2::zeros((n, d));
    x.row_mut(0).assign(&params.cls);
    x.slice_mut(s![1.., ..]).assign(&emb);
    x += &params.pos;
    x
}

/// Forward pass. `rng` enables dropout (training); `None` runs inference.
pub fn forward_with(
    params: &ModelParams,
    block: &Array2<f64>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ForwardCache)> {
    let grid = params.config.grid()?;
    let patches = patchify(block, &grid)?;
    let tokens = assemble_tokens(params, &patches);
    let (y, layers, x_final) = run_encoder(params, tokens, rng)?;
    Ok((
        y,
        ForwardCache {
            patches,
            tokens_id: params_fingerprint(params),
            layers,
            x_final,
            y,
        },
    ))
}

/// Inference on a prebuilt token matrix (no dropout). Used by invariance
/// tests that permute the token sequence.
pub fn forward_tokens(params: &ModelParams, tokens: Array2<f64>) -> Result<f64> {
    let (y, ..) = run_encoder(params, tokens, None)?;
    Ok(y)
}

/// Inference forward (dropout disabled).
pub fn forward(params: &ModelParams, block: &FeatureBlock) -> Result<(f64, ForwardCache)> {
    forward_with(params, &block.data, None)
}

/// Training forward with dropout driven by `seed`.
pub fn forward_train(
    params: &ModelParams,
    block: &Array2<f64>,
    seed: u64,
) -> Result<(f64, ForwardCache)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    forward_with(params, block, Some(&mut rng))
}

/// Maps the sigmoid output onto the label range.
pub fn predict_log_volume(params: &ModelParams, block: &FeatureBlock) -> Result<f64> {
    let (y, _) = forward(params, block)?;
    let (lo, hi) = params.config.label_map;
    Ok(lo + y * (hi - lo))
}

/// Cheap fingerprint tying a cache to the parameters that produced it.
fn params_fingerprint(params: &ModelParams) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: f64| {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x100000001b3);
    };
    mix(params.head_b);
    mix(params.proj_w[[0, 0]]);
    mix(params.pos[[0, 0]]);
    mix(params.cls[0]);
    h
}

/// Backward pass: gradients of `d_y * dy/dparam` for every tensor.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_y: f64,
) -> Result<ModelParams> {
    if cache.tokens_id != params_fingerprint(params) {
        return Err(Error::parameter(
            "stale forward cache does not match these parameters",
        ));
    }
    let cfg = &params.config;
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut grads = params.zeros_like();

    // head
    let d_logit = d_y * cache.y * (1.0 - cache.y);
    let cls_final = cache.x_final.row(0);
    grads.head_b = d_logit;
    grads
        .head_w
        .iter_mut()
        .zip(cls_final.iter())
        .for_each(|(g, &c)| *g = d_logit * c);
    let mut dx = Array2::zeros(cache.x_final.raw_dim());
    for (k, &w) in params.head_w.iter().enumerate() {
        dx[[0, k]] = d_logit * w;
    }

    // encoder layers, reversed
    for (layer, lcache, lgrads) in itertools_rev(&params.layers, &cache.layers, &mut grads.layers)
    {
        // MLP block
        let d_mlp_out = dx.clone();
        for (k, g) in lgrads.mlp_b2.iter_mut().enumerate() {
            *g += d_mlp_out.column(k).sum();
        }
        lgrads.mlp_w2 += &lcache.h_act.t().dot(&d_mlp_out);
        let mut d_h_act = d_mlp_out.dot(&layer.mlp_w2.t());
        if let Some(mask) = &lcache.mlp_mask {
            d_h_act *= mask;
        }
        let mut d_h_pre = Array2::zeros(d_h_act.raw_dim());
        ndarray::Zip::from(&mut d_h_pre)
            .and(&d_h_act)
            .and(&lcache.h_pre)
            .and(&lcache.h_tanh)
            .for_each(|o, &dg, &x, &t| *o = dg * gelu_prime_cached(x, t));
        for (k, g) in lgrads.mlp_b1.iter_mut().enumerate() {
            *g += d_h_pre.column(k).sum();
        }
        lgrads.mlp_w1 += &lcache.ln2_out.t().dot(&d_h_pre);
        let d_ln2_out = d_h_pre.dot(&layer.mlp_w1.t());
        let d_x_mid_ln = layer_norm_backward(
            &d_ln2_out,
            &lcache.ln2_xhat,
            &lcache.ln2_inv_std,
            &layer.ln2_g,
            &mut lgrads.ln2_g,
            &mut lgrads.ln2_b,
        );
        let d_x_mid = &dx + &d_x_mid_ln;

        // attention block
        let d_attn_out = d_x_mid.clone();
        for (k, g) in lgrads.bo.iter_mut().enumerate() {
            *g += d_attn_out.column(k).sum();
        }
        lgrads.wo += &lcache.context.t().dot(&d_attn_out);
        let d_context = d_attn_out.dot(&layer.wo.t());

        let n = d_context.nrows();
        let mut dq = Array2::zeros((n, cfg.width));
        let mut dk = Array2::zeros((n, cfg.width));
        let mut dv = Array2::zeros((n, cfg.width));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_ctx_h = d_context.slice(cols).to_owned();
            let vh = &lcache.v_heads[h];
            let qh = &lcache.q_heads[h];
            let kh = &lcache.k_heads[h];
            let probs = &lcache.attn[h];
            // forward used probs (optionally masked) . vh
            let d_used = d_ctx_h.dot(&vh.t());
            let (used, d_probs): (Array2<f64>, Array2<f64>) =
                if let Some(masks) = &lcache.attn_mask {
                    (probs * &masks[h], &d_used * &masks[h])
                } else {
                    (probs.clone(), d_used)
                };
            dv.slice_mut(cols).assign(&used.t().dot(&d_ctx_h));
            // softmax backward on probs, row-wise
            let mut d_scores = Array2::zeros((n, n));
            for i in 0..n {
                let p_row = probs.row(i);
                let dp_row = d_probs.row(i);
                let dot = p_row.dot(&dp_row);
                let pr = p_row.as_slice().unwrap();
                let dpr = dp_row.as_slice().unwrap();
                let out = d_scores.row_mut(i).into_slice().unwrap();
                for j in 0..n {
                    out[j] = pr[j] * (dpr[j] - dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&d_scores.dot(kh));
            dk.slice_mut(cols).assign(&d_scores.t().dot(qh));
        }
        for (k, g) in lgrads.bq.iter_mut().enumerate() {
            *g += dq.column(k).sum();
        }
        for (k, g) in lgrads.bk.iter_mut().enumerate() {
            *g += dk.column(k).sum();
        }
        for (k, g) in lgrads.bv.iter_mut().enumerate() {
            *g += dv.column(k).sum();
        }
        lgrads.wq += &lcache.ln1_out.t().dot(&dq);
        lgrads.wk += &lcache.ln1_out.t().dot(&dk);
        lgrads.wv += &lcache.ln1_out.t().dot(&dv);
        let d_ln1_out = dq.dot(&layer.wq.t()) + dk.dot(&layer.wk.t()) + dv.dot(&layer.wv.t());
        let d_x_in_ln = layer_norm_backward(
            &d_ln1_out,
            &lcache.ln1_xhat,
            &lcache.ln1_inv_std,
            &layer.ln1_g,
            &mut lgrads.ln1_g,
            &mut lgrads.ln1_b,
        );
        dx = &d_x_mid + &d_x_in_ln;
    }

    // token assembly
    grads.pos.assign(&dx);
    grads.cls.assign(&dx.row(0));
    let d_emb = dx.slice(s![1.., ..]).to_owned();
    grads.proj_w = cache.patches.t().dot(&d_emb);
    grads
        .proj_b
        .assign(&d_emb.sum_axis(Axis(0)));
    Ok(grads)
}

/// Reverse zip over layers and their caches/grads.
fn itertools_rev<'a>(
    layers: &'a [LayerParams],
    caches: &'a [LayerCache],
    grads: &'a mut [LayerParams],
) -> impl Iterator<Item = (&'a LayerParams, &'a LayerCache, &'a mut LayerParams)> {
    layers
        .iter()
        .rev()
        .zip(caches.iter().rev())
        .zip(grads.iter_mut().rev())
        .map(|((l, c), g)| (l, c, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;

    fn random_block(cfg: &ModelConfig, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((cfg.input_f, cfg.input_t), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn output_is_in_unit_interval() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 3).unwrap();
        let block = random_block(&cfg, 1);
        let (y, _) = forward_with(&params, &block, None).unwrap();
        assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn zero_params_give_half() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 3).unwrap().zeros_like();
        let block = random_block(&cfg, 2);
        let (y, _) = forward_with(&params, &block, None).unwrap();
        assert_eq!(y, 0.5);
    }

    #[test]
    fn label_map_endpoints_and_midpoint() {
        let cfg = ModelConfig::grad_check();
        let (lo, hi) = cfg.label_map;
        assert_eq!(lo + 0.0 * (hi - lo), 1.0);
        assert_eq!(lo + 1.0 * (hi - lo), 4.5);
        // zeroed parameters force y = 0.5, the affine midpoint 2.75
        let params = ModelParams::init(&cfg, 3).unwrap().zeros_like();
        let block = FeatureBlock {
            data: random_block(&cfg, 8),
        };
        let mid = predict_log_volume(&params, &block).unwrap();
        assert!((mid - 2.75).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let block = random_block(&cfg, 9);
        let (a, _) = forward_with(&params, &block, None).unwrap();
        let (b, _) = forward_with(&params, &block, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn token_permutation_with_positions_is_invariant() {
        // permuting patch tokens together with their positional rows leaves
        // the output unchanged: attention is permutation-equivariant and the
        // class token stays at row 0.
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let block = random_block(&cfg, 9);
        let (y_ref, _) = forward_with(&params, &block, None).unwrap();

        let grid = cfg.grid().unwrap();
        let patches = patchify(&block, &grid).unwrap();
        let p = grid.patches();
        let d = cfg.width;
        let emb = {
            let mut e = patches.dot(&params.proj_w);
            for mut row in e.rows_mut() {
                row += &params.proj_b;
            }
            e
        };
        // reversal permutation of the patch tokens
        let perm: Vec<usize> = (0..p).rev().collect();
        let mut tokens = Array2::zeros((p + 1, d));
        tokens
            .row_mut(0)
            .assign(&(&params.cls + &params.pos.row(0)));
        for (dst, &src) in perm.iter().enumerate() {
            let tok = &emb.row(src) + &params.pos.row(src + 1);
            tokens.row_mut(dst + 1).assign(&tok);
        }
        let y_perm = forward_tokens(&params, tokens).unwrap();
        assert!(
            (y_perm - y_ref).abs() < 1e-9,
            "permuted {y_perm} vs reference {y_ref}"
        );
    }

    #[test]
    fn full_width_shape_chain() {
        // 30x1997 -> 398x256 patches -> 399x768 tokens -> scalar
        let cfg = ModelConfig {
            layers: 1,
            ..ModelConfig::full()
        };
        let grid = cfg.grid().unwrap();
        assert_eq!((grid.patches(), grid.patch_dim()), (398, 256));
        let params = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(params.pos.dim(), (399, 768));
        let block = random_block(&cfg, 2);
        let (y, cache) = forward_with(&params, &block, None).unwrap();
        assert!(y > 0.0 && y < 1.0);
        assert_eq!(cache.output(), y);
    }

    #[test]
    fn zero_output_gradient_means_zero_gradients() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let block = random_block(&cfg, 4);
        let (_, cache) = forward_with(&params, &block, None).unwrap();
        let grads = backward(&params, &cache, 0.0).unwrap();
        let mut total = 0.0;
        grads.visit(|_, t| total += t.iter().map(|v| v.abs()).sum::<f64>());
        assert_eq!(total, 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let block = random_block(&cfg, 4);
        let (_, cache) = forward_with(&params, &block, None).unwrap();
        let other = ModelParams::init(&cfg, 6).unwrap();
        assert!(backward(&other, &cache, 1.0).is_err());
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let block = random_block(&cfg, 4);
        let (_, cache) = forward_with(&params, &block, None).unwrap();
        let g1 = backward(&params, &cache, 1.0).unwrap();
        // duplicated sample: gradient of the sum is twice the single gradient
        let mut g2 = backward(&params, &cache, 1.0).unwrap();
        g2.add_scaled(&g1, 1.0);
        let mut max_rel: f64 = 0.0;
        let mut a_chunks = Vec::new();
        g1.visit(|_, t| a_chunks.push(t.to_vec()));
        let mut i = 0;
        g2.visit(|_, t| {
            for (x2, x1) in t.iter().zip(a_chunks[i].iter()) {
                if x1.abs() > 1e-12 {
                    max_rel = max_rel.max((x2 - 2.0 * x1).abs() / x1.abs());
                }
            }
            i += 1;
        });
        assert!(max_rel < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // central differences, step 1e-5, f64; per-tensor L2 relative error
        let cfg = ModelConfig::grad_check();
        let params = ModelParams::init(&cfg, 11).unwrap();
        let block = random_block(&cfg, 12);
        let (_, cache) = forward_with(&params, &block, None).unwrap();
        let analytic = backward(&params, &cache, 1.0).unwrap();

        let mut tensor_names = Vec::new();
        let mut tensor_lens = Vec::new();
        analytic.visit(|name, t| {
            tensor_names.push(name.to_string());
            tensor_lens.push(t.len());
        });

        let eps = 1e-5;
        let n = params.n_params();
        let mut numeric_flat = vec![0.0; n];
        for idx in 0..n {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut pos = 0;
            plus.visit_mut(|_, t| {
                if idx >= pos && idx < pos + t.len() {
                    t[idx - pos] += eps;
                }
                pos += t.len();
            });
            pos = 0;
            minus.visit_mut(|_, t| {
                if idx >= pos && idx < pos + t.len() {
                    t[idx - pos] -= eps;
                }
                pos += t.len();
            });
            let (yp, _) = forward_with(&plus, &block, None).unwrap();
            let (ym, _) = forward_with(&minus, &block, None).unwrap();
            numeric_flat[idx] = (yp - ym) / (2.0 * eps);
        }

        let mut max_rel: f64 = 0.0;
        let mut worst = String::new();
        let mut offset = 0;
        let mut ti = 0;
        analytic.visit(|name, t| {
            let numeric = &numeric_flat[offset..offset + t.len()];
            let err: f64 = t
                .iter()
                .zip(numeric.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = err / norm.max(1e-10);
            if rel > max_rel {
                max_rel = rel;
                worst = name.to_string();
            }
            offset += t.len();
            ti += 1;
        });
        assert_eq!(ti, tensor_names.len());
        assert!(
            max_rel < 1e-4,
            "max per-tensor relative error {max_rel} at {worst}"
        );
    }

}
