//! Overlapping patch extraction from a feature block.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Default patch edge (both axes).
pub const DEFAULT_PATCH: usize = 16;
/// Default stride (patch minus 6 overlap on both axes).
pub const DEFAULT_STRIDE: usize = 10;

/// Number of patches along one axis: floor((len - patch) / stride) + 1.
fn axis_patches(len: usize, patch: usize, stride: usize) -> Result<usize> {
    if patch == 0 || stride == 0 {
        return Err(Error::parameter("patch and stride must be positive"));
    }
    if len < patch {
        return Err(Error::parameter(format!(
            "axis length {len} smaller than patch {patch}"
        )));
    }
    Ok((len - patch) / stride + 1)
}

/// Total overlapping patch count for an F x T block.
pub fn patch_count(f: usize, t: usize, patch: usize, stride: usize) -> Result<usize> {
    Ok(axis_patches(f, patch, stride)? * axis_patches(t, patch, stride)?)
}

/// Patch layout over a fixed input shape.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatchGrid {
    pub input_f: usize,
    pub input_t: usize,
    pub patch_f: usize,
    pub patch_t: usize,
    pub stride_f: usize,
    pub stride_t: usize,
    pub n_f: usize,
    pub n_t: usize,
}

impl PatchGrid {
    pub fn new(
        input_f: usize,
        input_t: usize,
        patch: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let n_f = axis_patches(input_f, patch.0, stride.0)?;
        let n_t = axis_patches(input_t, patch.1, stride.1)?;
        Ok(Self {
            input_f,
            input_t,
            patch_f: patch.0,
            patch_t: patch.1,
            stride_f: stride.0,
            stride_t: stride.1,
            n_f,
            n_t,
        })
    }

    pub fn patches(&self) -> usize {
        self.n_f * self.n_t
    }

    /// Values per flattened patch.
    pub fn patch_dim(&self) -> usize {
        self.patch_f * self.patch_t
    }

    /// Patch offsets along an axis; the final offset clamps so the last
    /// patch ends exactly at the boundary.
    fn offsets(n: usize, len: usize, patch: usize, stride: usize) -> Vec<usize> {
        (0..n)
            .map(|i| if i + 1 == n { len - patch } else { i * stride })
            .collect()
    }

    pub fn offsets_f(&self) -> Vec<usize> {
        Self::offsets(self.n_f, self.input_f, self.patch_f, self.stride_f)
    }

    pub fn offsets_t(&self) -> Vec<usize> {
        Self::offsets(self.n_t, self.input_t, self.patch_t, self.stride_t)
    }
}

/// Extracts overlapping patches, feature axis outer and time axis inner,
/// each flattened row-major to `patch_dim` values.
pub fn patchify(data: &Array2<f64>, grid: &PatchGrid) -> Result<Array2<f64>> {
    if data.nrows() != grid.input_f || data.ncols() != grid.input_t {
        return Err(Error::parameter(format!(
            "block {}x{} does not match grid input {}x{}",
            data.nrows(),
            data.ncols(),
            grid.input_f,
            grid.input_t
        )));
    }
    let offs_f = grid.offsets_f();
    let offs_t = grid.offsets_t();
    let mut out = Array2::zeros((grid.patches(), grid.patch_dim()));
    for (i, &of) in offs_f.iter().enumerate() {
        for (j, &ot) in offs_t.iter().enumerate() {
            let p = i * grid.n_t + j;
            for r in 0..grid.patch_f {
                for c in 0..grid.patch_t {
                    out[[p, r * grid.patch_t + c]] = data[[of + r, ot + c]];
                }
            }
        }
    }
    Ok(out)
}
