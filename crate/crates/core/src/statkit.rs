//! Mahalanobis distance, chi-square tail mapping, confidence ellipsoids and
//! empirical CDFs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::invalid("mean and covariance dimensions differ"));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal over the listed components.
    pub fn marginal(&self, idx: &[usize]) -> Self {
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]);
        Self { mean, cov }
    }
}

/// Squared Mahalanobis distance of `x` from `g`, through a Cholesky solve.
pub fn mahalanobis_squared(x: &DVector<f64>, g: &Gaussian) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::invalid("point and distribution dimensions differ"));
    }
    let chol = g
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Covariance("Mahalanobis covariance".into()))?;
    let d = x - &g.mean;
    let z = chol.l().solve_lower_triangular(&d).ok_or_else(|| Error::Covariance("triangular solve".into()))?;
    Ok(z.norm_squared())
}

pub fn mahalanobis(x: &DVector<f64>, g: &Gaussian) -> Result<f64> {
    mahalanobis_squared(x, g).map(f64::sqrt)
}

/// Lower regularized incomplete gamma P(n/2, q/2).
pub fn chi2_cdf(q: f64, dof: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if dof == 2 {
        return -(-q / 2.0).exp_m1();
    }
    ChiSquared::new(dof as f64).map(|c| c.cdf(q)).unwrap_or(f64::NAN)
}

pub fn chi2_inverse(p: f64, dof: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if dof == 2 {
        return -2.0 * (-p).ln_1p();
    }
    ChiSquared::new(dof as f64).map(|c| c.inverse_cdf(p)).unwrap_or(f64::NAN)
}

/// Argument fed to the chi-square CDF when turning a distance into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiSquareArgument {
    /// CDF evaluated at the distance itself.
    #[default]
    Distance,
    /// CDF evaluated at the squared distance (the variable that is χ²-distributed).
    SquaredDistance,
}

/// Manoeuvre probability from a Mahalanobis distance: zero inside the 50%
/// ellipsoid, rising linearly in the chi-square CDF to one outside it.
pub fn pr_md(md: f64, dof: usize, arg: ChiSquareArgument) -> f64 {
    let q = match arg {
        ChiSquareArgument::Distance => md,
        ChiSquareArgument::SquaredDistance => md * md,
    };
    pr_from_cdf(chi2_cdf(q, dof))
}

/// The 50%-dead-zone mapping applied to a CDF value.
pub fn pr_from_cdf(cdf: f64) -> f64 {
    (2.0 * (cdf - 0.5)).clamp(0.0, 1.0)
}

/// Whether `x` lies inside the `p` confidence ellipsoid of `g`.
pub fn confidence_ellipsoid_contains(x: &DVector<f64>, g: &Gaussian, p: f64) -> Result<bool> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    Ok(mahalanobis_squared(x, g)? <= chi2_inverse(p, g.dim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical CDF needs at least one sample"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN sample"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples ≤ `j`.
    pub fn eval(&self, j: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= j) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample with ECDF ≥ `d`.
    pub fn percentile(&self, d: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((d * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn median(&self) -> f64 {
        self.percentile(0.5)
    }
}

/// A CDF tabulated on a fixed grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCdf {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridCdf {
    /// Smallest abscissa at which the curve reaches `d` (linear between nodes).
    /// Returns the last grid point if the curve never gets there.
    pub fn percentile(&self, d: f64) -> f64 {
        for k in 0..self.grid.len() {
            if self.values[k] >= d {
                if k == 0 {
                    return self.grid[0];
                }
                let (v0, v1) = (self.values[k - 1], self.values[k]);
                let w = if v1 > v0 { (d - v0) / (v1 - v0) } else { 1.0 };
                return self.grid[k - 1] + w * (self.grid[k] - self.grid[k - 1]);
            }
        }
        *self.grid.last().unwrap()
    }
}

/// `n` logarithmically spaced points spanning `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Sample mean and unbiased sample covariance of equally weighted rows.
pub fn sample_mean_cov(rows: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(k);
    for r in rows {
        mean += r;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(k, k);
    for r in rows {
        let d = r - &mean;
        cov += &d * d.transpose();
    }
    if rows.len() > 1 {
        cov /= n - 1.0;
    }
    (mean, cov)
}
