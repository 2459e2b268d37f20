//! Traffic flow grid maps and their patch partition.

use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Inflow channel index for aggregated trip data.
pub const INFLOW: usize = 0;
/// Outflow channel index for aggregated trip data.
pub const OUTFLOW: usize = 1;

/// One time step of flow values on an `h × w` grid with `d` channels.
///
/// Values are stored row-major with channels innermost: `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    h: usize,
    w: usize,
    d: usize,
    values: Vec<f64>,
}

impl GridMap {
    pub fn new(h: usize, w: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * w * d {
            return Err(Error::data(format!(
                "grid map {h}x{w}x{d} needs {} values, got {}",
                h * w * d,
                values.len()
            )));
        }
        Ok(GridMap { h, w, d, values })
    }

    pub fn zeros(h: usize, w: usize, d: usize) -> Self {
        GridMap {
            h,
            w,
            d,
            values: vec![0.0; h * w * d],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.w + col) * self.d + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.index(row, col, ch);
        self.values[i] = v;
    }

    /// Single-channel copy of channel `ch`.
    pub fn select_channel(&self, ch: usize) -> GridMap {
        let values = self.values.iter().skip(ch).step_by(self.d).copied().collect();
        GridMap {
            h: self.h,
            w: self.w,
            d: 1,
            values,
        }
    }
}

/// A grid map split into non-overlapping `P × P` patches, one flattened
/// patch per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch: usize,
    pub tokens: Mat,
}

impl PatchGrid {
    pub fn n_patches(&self) -> usize {
        self.tokens.rows()
    }

    pub fn patch_dim(&self) -> usize {
        self.tokens.cols()
    }
}

pub(crate) fn check_divisible(h: usize, w: usize, patch: usize) -> Result<()> {
    if patch == 0 || !h.is_multiple_of(patch) || !w.is_multiple_of(patch) {
        return Err(Error::config(format!(
            "patch size {patch} must divide both grid height {h} and grid width {w}"
        )));
    }
    Ok(())
}

/// Partition `x` into `P × P` patches.
///
/// Patches are ordered row-major over the patch grid; within a patch, cells
/// are row-major with channels innermost, so each token has `P²·d` entries.
pub fn patchify(x: &GridMap, patch: usize) -> Result<PatchGrid> {
    let (h, w, d) = x.dims();
    check_divisible(h, w, patch)?;
    let (ph, pw) = (h / patch, w / patch);
    let patch_dim = patch * patch * d;
    let mut tokens = Mat::zeros(ph * pw, patch_dim);
    for pi in 0..ph {
        for pj in 0..pw {
            let row = tokens.row_mut(pi * pw + pj);
            let mut k = 0;
            for di in 0..patch {
                let start = x.index(pi * patch + di, pj * patch, 0);
                let len = patch * d;
                row[k..k + len].copy_from_slice(&x.values[start..start + len]);
                k += len;
            }
        }
    }
    Ok(PatchGrid { patch, tokens })
}

/// Inverse of [`patchify`].
pub fn unpatchify(g: &PatchGrid, h: usize, w: usize, d: usize) -> Result<GridMap> {
    let patch = g.patch;
    check_divisible(h, w, patch)?;
    let (ph, pw) = (h / patch, w / patch);
    if g.tokens.shape() != (ph * pw, patch * patch * d) {
        return Err(Error::config(format!(
            "patch tokens {:?} do not tile a {h}x{w}x{d} grid with patch {patch}",
            g.tokens.shape()
        )));
    }
    let mut out = GridMap::zeros(h, w, d);
    for pi in 0..ph {
        for pj in 0..pw {
            let row = g.tokens.row(pi * pw + pj);
            let mut k = 0;
            for di in 0..patch {
                let start = out.index(pi * patch + di, pj * patch, 0);
                let len = patch * d;
                out.values[start..start + len].copy_from_slice(&row[k..k + len]);
                k += len;
            }
        }
    }
    Ok(out)
}
