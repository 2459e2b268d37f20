use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{counter, Mat};
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Exact GELU, `x·Φ(x)` with `Φ` the standard normal CDF.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// d/dx of [`gelu`]: `Φ(x) + x·φ(x)`.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_mat(x: &Mat) -> Mat {
    counter::add(2 * x.len());
    x.map(gelu)
}

/// Affine LayerNorm over the last axis (each row normalized on its own).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Mat,
    pub beta: Mat,
    pub eps: f64,
}

impl LayerNormParams {
    /// `gamma = 1`, `beta = 0`.
    pub fn identity(dim: usize) -> Self {
        LayerNormParams {
            gamma: Mat::filled(1, dim, 1.0),
            beta: Mat::zeros(1, dim),
            eps: LAYERNORM_EPS,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNormParams {
            gamma: Mat::zeros(1, self.dim()),
            beta: Mat::zeros(1, self.dim()),
            eps: self.eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols()
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub fn layernorm_fwd(x: &Mat, p: &LayerNormParams) -> Result<(Mat, LayerNormCache)> {
    let dim = x.cols();
    if p.gamma.shape() != (1, dim) || p.beta.shape() != (1, dim) {
        return Err(Error::config(format!(
            "layernorm over {dim} features given gamma {:?} and beta {:?}",
            p.gamma.shape(),
            p.beta.shape()
        )));
    }
    if p.eps.is_nan() || p.eps <= 0.0 {
        return Err(Error::config(format!("layernorm eps must be > 0, got {}", p.eps)));
    }
    counter::add(3 * x.len());
    let mut xhat = Mat::zeros(x.rows(), dim);
    let mut y = Mat::zeros(x.rows(), dim);
    let mut inv_std = Vec::with_capacity(x.rows());
    let n = dim as f64;
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + p.eps).sqrt();
        inv_std.push(istd);
        let gamma = p.gamma.as_slice();
        let beta = p.beta.as_slice();
        let xh = xhat.row_mut(r);
        for c in 0..dim {
            xh[c] = (row[c] - mean) * istd;
        }
        let yr = y.row_mut(r);
        for c in 0..dim {
            yr[c] = xh[c] * gamma[c] + beta[c];
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

/// Backward pass of [`layernorm_fwd`]. Parameter gradients are accumulated
/// into `grads`; the input gradient is returned.
pub fn layernorm_bwd(
    dy: &Mat,
    cache: &LayerNormCache,
    p: &LayerNormParams,
    grads: &mut LayerNormParams,
) -> Result<Mat> {
    if dy.shape() != cache.xhat.shape() {
        return Err(Error::internal(format!(
            "layernorm backward: upstream {:?} vs cached {:?}",
            dy.shape(),
            cache.xhat.shape()
        )));
    }
    let dim = dy.cols();
    let n = dim as f64;
    let gamma = p.gamma.as_slice();
    let mut dx = Mat::zeros(dy.rows(), dim);
    let mut dxhat = vec![0.0; dim];
    for r in 0..dy.rows() {
        let g = dy.row(r);
        let xh = cache.xhat.row(r);
        {
            let dgamma = grads.gamma.as_mut_slice();
            for c in 0..dim {
                dgamma[c] += g[c] * xh[c];
            }
        }
        {
            let dbeta = grads.beta.as_mut_slice();
            for c in 0..dim {
                dbeta[c] += g[c];
            }
        }
        for c in 0..dim {
            dxhat[c] = g[c] * gamma[c];
        }
        let sum_d: f64 = dxhat.iter().sum();
        let sum_dx: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let scale = cache.inv_std[r] / n;
        let out = dx.row_mut(r);
        for c in 0..dim {
            out[c] = scale * (n * dxhat[c] - sum_d - xh[c] * sum_dx);
        }
    }
    Ok(dx)
}

/// Two-layer GELU MLP applied row-wise: `in_dim → hidden → out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlockParams {
    pub w_in: Mat,
    pub b_in: Mat,
    pub w_out: Mat,
    pub b_out: Mat,
}

impl MlpBlockParams {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        MlpBlockParams {
            w_in: Mat::zeros(in_dim, hidden),
            b_in: Mat::zeros(1, hidden),
            w_out: Mat::zeros(hidden, out_dim),
            b_out: Mat::zeros(1, out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpBlockParams::zeros(self.in_dim(), self.hidden(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w_out.cols()
    }
}

#[derive(Debug, Clone)]
pub struct MlpBlockCache {
    ln: LayerNormCache,
    normed: Mat,
    pre: Mat,
    act: Mat,
}

/// `y = x + GELU(LayerNorm(x)·W_in + b_in)·W_out + b_out`, row by row.
pub fn mlp_block_fwd(
    x: &Mat,
    p: &MlpBlockParams,
    ln: &LayerNormParams,
) -> Result<(Mat, MlpBlockCache)> {
    let (in_dim, hidden, out_dim) = (p.in_dim(), p.hidden(), p.out_dim());
    if x.cols() != in_dim
        || in_dim != out_dim
        || p.w_out.rows() != hidden
        || p.b_in.shape() != (1, hidden)
        || p.b_out.shape() != (1, out_dim)
    {
        return Err(Error::config(format!(
            "mlp block {in_dim}->{hidden}->{out_dim} cannot take input {:?} with a residual",
            x.shape()
        )));
    }
    let (normed, ln_cache) = layernorm_fwd(x, ln)?;
    let mut pre = normed.matmul(&p.w_in);
    pre.add_row_broadcast(&p.b_in);
    let act = gelu_mat(&pre);
    let mut y = act.matmul(&p.w_out);
    y.add_row_broadcast(&p.b_out);
    y.add_assign(x);
    Ok((
        y,
        MlpBlockCache {
            ln: ln_cache,
            normed,
            pre,
            act,
        },
    ))
}

/// Backward pass of [`mlp_block_fwd`]. Parameter gradients are accumulated
/// into `grads` / `ln_grads`; the input gradient is returned.
pub fn mlp_block_bwd(
    dy: &Mat,
    cache: &MlpBlockCache,
    p: &MlpBlockParams,
    ln: &LayerNormParams,
    grads: &mut MlpBlockParams,
    ln_grads: &mut LayerNormParams,
) -> Result<Mat> {
    if dy.rows() != cache.act.rows() || dy.cols() != p.out_dim() {
        return Err(Error::internal(format!(
            "mlp block backward: upstream {:?} does not match forward output",
            dy.shape()
        )));
    }
    grads.b_out.add_assign(&dy.col_sums());
    grads.w_out.add_assign(&cache.act.t_matmul(dy));
    let dact = dy.matmul_t(&p.w_out);
    let dpre = Mat::from_fn(dact.rows(), dact.cols(), |r, c| {
        dact.get(r, c) * gelu_grad(cache.pre.get(r, c))
    });
    grads.b_in.add_assign(&dpre.col_sums());
    grads.w_in.add_assign(&cache.normed.t_matmul(&dpre));
    let dnormed = dpre.matmul_t(&p.w_in);
    let mut dx = layernorm_bwd(&dnormed, &cache.ln, ln, ln_grads)?;
    dx.add_assign(dy);
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{init_params, InitScheme};

    /// Independent erf for the oracle: Maclaurin series, converges fast for |x| ≤ 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..80 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn gelu_fixed_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        let oracle = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
        assert!((gelu(1.0) - oracle).abs() < 1e-15);
        // Frozen from the series oracle above.
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -1.2, -0.3, 0.0, 0.4, 1.0, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let x = Mat::filled(2, 5, 3.25);
        let (y, _) = layernorm_fwd(&x, &LayerNormParams::identity(5)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layernorm_zero_gamma_collapses_to_beta() {
        let x = Mat::from_fn(3, 4, |r, c| (r as f64 - c as f64 * 1.7).cos());
        let mut p = LayerNormParams::identity(4);
        p.gamma.fill(0.0);
        p.beta.fill(0.75);
        let (y, _) = layernorm_fwd(&x, &p).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn layernorm_matches_direct_formula() {
        let x = init_params(3, 4, 11, InitScheme::UniformFanIn);
        let mut p = LayerNormParams::identity(4);
        p.gamma = Mat::row_vector(vec![0.5, -1.0, 2.0, 1.5]);
        p.beta = Mat::row_vector(vec![0.1, 0.2, -0.3, 0.0]);
        let (y, _) = layernorm_fwd(&x, &p).unwrap();
        for r in 0..3 {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            for (c, v) in row.iter().enumerate() {
                let expect = (v - mean) / (var + LAYERNORM_EPS).sqrt() * p.gamma.get(0, c)
                    + p.beta.get(0, c);
                assert!((y.get(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layernorm_rejects_wrong_dim() {
        let x = Mat::zeros(2, 3);
        let err = layernorm_fwd(&x, &LayerNormParams::identity(4)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn mlp_block_with_zero_weights_is_identity() {
        let x = init_params(4, 6, 3, InitScheme::UniformFanIn);
        let p = MlpBlockParams::zeros(6, 8, 6);
        let (y, _) = mlp_block_fwd(&x, &p, &LayerNormParams::identity(6)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn mlp_block_hand_evaluated() {
        // One row x = (1, 3): LayerNorm gives (-1, 1)·(1/√(1+eps)).
        // hidden = 1 unit: pre = 0.5·n0 - 0.25·n1 + 0.1, out = gelu(pre)·(2, -1) + (0.05, 0).
        let x = Mat::row_vector(vec![1.0, 3.0]);
        let p = MlpBlockParams {
            w_in: Mat::from_vec(2, 1, vec![0.5, -0.25]),
            b_in: Mat::row_vector(vec![0.1]),
            w_out: Mat::from_vec(1, 2, vec![2.0, -1.0]),
            b_out: Mat::row_vector(vec![0.05, 0.0]),
        };
        let (y, _) = mlp_block_fwd(&x, &p, &LayerNormParams::identity(2)).unwrap();
        let s = 1.0 / (1.0 + LAYERNORM_EPS).sqrt();
        let pre = 0.5 * -s - 0.25 * s + 0.1;
        let g = pre * 0.5 * (1.0 + erf_series(pre / 2f64.sqrt()));
        assert!((y.get(0, 0) - (1.0 + 2.0 * g + 0.05)).abs() < 1e-14);
        assert!((y.get(0, 1) - (3.0 - g)).abs() < 1e-14);
    }

    #[test]
    fn mlp_block_rejects_non_residual_shapes() {
        let x = Mat::zeros(2, 3);
        let p = MlpBlockParams::zeros(3, 2, 4);
        assert!(matches!(
            mlp_block_fwd(&x, &p, &LayerNormParams::identity(3)),
            Err(Error::Config(_))
        ));
    }
}
