//! Cross-modality adaptation of pretrained weights: channel averaging of a
//! 3-channel patch projection and cut/bi-linear resizing of a positional
//! table onto a new patch grid.

use ndarray::{s, Array1, Array2, Array3};

use crate::error::{Error, Result};

/// Averages a 3-channel patch projection into a single-channel one; the
/// bias passes through unchanged.
///
/// `w3` is laid out (channel, patch_dim, width). For any single-channel
/// input x, the result satisfies w1 . x = (1/3) * w3 . (x, x, x).
pub fn adapt_channel_average(
    w3: &Array3<f64>,
    bias: &Array1<f64>,
) -> Result<(Array2<f64>, Array1<f64>)> {
    if w3.dim().0 != 3 {
        return Err(Error::parameter(format!(
            "expected 3 input channels, got {}",
            w3.dim().0
        )));
    }
    let (_, pd, width) = w3.dim();
    let mut w1 = Array2::zeros((pd, width));
    for c in 0..3 {
        w1 += &w3.slice(s![c, .., ..]);
    }
    w1.mapv_inplace(|v| v / 3.0);
    Ok((w1, bias.clone()))
}

/// Separable linear interpolation along one axis with corner alignment.
/// `src` has shape (len_src, inner); returns (len_tgt, inner).
fn interp_axis(src: &Array2<f64>, len_tgt: usize) -> Array2<f64> {
    let len_src = src.nrows();
    if len_src == len_tgt {
        return src.clone();
    }
    let inner = src.ncols();
    let mut out = Array2::zeros((len_tgt, inner));
    for i in 0..len_tgt {
        let coord = if len_tgt > 1 {
            i as f64 * (len_src - 1) as f64 / (len_tgt - 1) as f64
        } else {
            (len_src - 1) as f64 / 2.0
        };
        let lo = coord.floor() as usize;
        let hi = (lo + 1).min(len_src - 1);
        let frac = coord - lo as f64;
        for k in 0..inner {
            out[[i, k]] = src[[lo, k]] * (1.0 - frac) + src[[hi, k]] * frac;
        }
    }
    out
}

/// Central cut of `len_tgt` consecutive positions when shrinking an axis.
fn cut_axis(src: &Array2<f64>, len_tgt: usize) -> Array2<f64> {
    let len_src = src.nrows();
    if len_tgt >= len_src {
        return src.clone();
    }
    let start = (len_src - len_tgt) / 2;
    src.slice(s![start..start + len_tgt, ..]).to_owned()
}

/// Adapts a positional table from a source patch grid to a target grid.
///
/// Row 0 (the class token position) is copied. The remaining rows are
/// reshaped to the source 2-D grid; per axis, a larger source is centrally
/// cut and a smaller one is bi-linearly interpolated with corner alignment
/// (no extrapolation beyond the corners). Rows are re-flattened feature
/// axis outer, matching the patch enumeration order.
pub fn interpolate_positional(
    pos_src: &Array2<f64>,
    src_grid: (usize, usize),
    tgt_grid: (usize, usize),
) -> Result<Array2<f64>> {
    let (sf, st) = src_grid;
    let (tf, tt) = tgt_grid;
    if sf == 0 || st == 0 || tf == 0 || tt == 0 {
        return Err(Error::parameter("grid dimensions must be positive"));
    }
    let d = pos_src.ncols();
    if pos_src.nrows() != sf * st + 1 {
        return Err(Error::parameter(format!(
            "positional table has {} rows, expected {}x{}+1",
            pos_src.nrows(),
            sf,
            st
        )));
    }

    // rows 1.. as a (sf, st, d) grid flattened feature-outer; operate on the
    // feature axis with (sf, st*d) views and on the time axis per feature row.
    let body = pos_src.slice(s![1.., ..]);

    // feature axis: (sf, st*d)
    let feat_view = body
        .to_owned()
        .into_shape_with_order((sf, st * d))
        .map_err(|e| Error::parameter(format!("reshape: {e}")))?;
    let feat_done = interp_axis(&cut_axis(&feat_view, tf.min(sf)), tf);

    // time axis: per target feature row, reshape (st, d), cut/interp to tt.
    let mut out = Array2::zeros((tf * tt + 1, d));
    out.row_mut(0).assign(&pos_src.row(0));
    for i in 0..tf {
        let row = feat_done.row(i).to_owned();
        let grid_row = row
            .into_shape_with_order((st, d))
            .map_err(|e| Error::parameter(format!("reshape: {e}")))?;
        let time_done = interp_axis(&cut_axis(&grid_row, tt.min(st)), tt);
        for j in 0..tt {
            out.row_mut(1 + i * tt + j).assign(&time_done.row(j));
        }
    }
    Ok(out)
}
