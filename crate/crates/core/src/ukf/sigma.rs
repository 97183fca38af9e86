use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric sigma-point set with mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

/// Lower Cholesky factor, retried with a small diagonal load when the
/// factorization fails.
pub fn robust_cholesky(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = 0.5 * (p + p.transpose());
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c.l());
    }
    let n = p.nrows();
    let mut eps = 1e-12 * sym.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    for _ in 0..6 {
        let loaded = &sym + DMatrix::identity(n, n) * eps;
        if let Some(c) = loaded.cholesky() {
            return Ok(c.l());
        }
        eps *= 100.0;
    }
    Err(Error::Covariance("Cholesky factorization failed after regularization".into()))
}

/// 2n+1 points x, x ± √(n+κ)·L_i where P = L Lᵀ.
pub fn sigma_points(x: &DVector<f64>, p: &DMatrix<f64>, kappa: f64) -> Result<SigmaPoints> {
    let n = x.len();
    let nk = n as f64 + kappa;
    if !(nk > 0.0) {
        return Err(Error::invalid("n + κ must be positive"));
    }
    let l = robust_cholesky(p)? * nk.sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(x.clone());
    for i in 0..n {
        points.push(x + l.column(i));
    }
    for i in 0..n {
        points.push(x - l.column(i));
    }
    let mut wm = vec![1.0 / (2.0 * nk); 2 * n + 1];
    wm[0] = kappa / nk;
    let wc = wm.clone();
    Ok(SigmaPoints { points, wm, wc })
}

/// Weighted mean and covariance of transformed points; `residual(a, b)` forms a − b.
pub fn weighted_moments<F>(ys: &[DVector<f64>], wm: &[f64], wc: &[f64], residual: F) -> (DVector<f64>, DMatrix<f64>)
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let k = ys[0].len();
    // Offsets from the central point, so that wrapped components average correctly.
    let mut off = DVector::zeros(k);
    for (y, w) in ys.iter().zip(wm) {
        off += residual(y, &ys[0]) * *w;
    }
    let mean = &ys[0] + off;
    let mut cov = DMatrix::zeros(k, k);
    for (y, w) in ys.iter().zip(wc) {
        let d = residual(y, &mean);
        cov += &d * d.transpose() * *w;
    }
    (mean, cov)
}

pub fn cross_covariance(
    xs: &[DVector<f64>],
    x_mean: &DVector<f64>,
    ys: &[DVector<f64>],
    y_mean: &DVector<f64>,
    wc: &[f64],
    residual: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(x_mean.len(), y_mean.len());
    for ((x, y), w) in xs.iter().zip(ys).zip(wc) {
        c += (x - x_mean) * residual(y, y_mean).transpose() * *w;
    }
    c
}
