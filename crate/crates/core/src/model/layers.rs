//! Row-wise layer norm and GELU with their derivatives.

use crate::tensor::Matrix;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Matrix,
    pub rstd: Vec<f64>,
}

/// `y = (x − mean) / √(var + eps) · gain + bias`, per row.
pub(crate) fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnCache) {
    let (n, d) = x.shape();
    let mut xhat = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    let mut rstd = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(rs);
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[(r, c)] = h;
            y[(r, c)] = h * gain[(0, c)] + bias[(0, c)];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns `dx`; accumulates into `dgain` and `dbias`.
pub(crate) fn layer_norm_backward(
    dy: &Matrix,
    cache: &LnCache,
    gain: &Matrix,
    dgain: &mut Matrix,
    dbias: &mut Matrix,
) -> Matrix {
    let (n, d) = dy.shape();
    let mut dx = Matrix::zeros(n, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let xh = cache.xhat.row(r);
        let g = dy.row(r);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..d {
            dgain[(0, c)] += g[c] * xh[c];
            dbias[(0, c)] += g[c];
            dxhat[c] = g[c] * gain[(0, c)];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xh[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[(r, c)] = rs * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
