//! Track compression: a weighted polynomial fit of range, elevation and
//! azimuth sharing the range coefficients with the range-rate plots, read out
//! at the track mid-time as a four-component attributable with covariance.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::epoch::{from_iso, to_iso};
use crate::error::{Error, Result};
use crate::radar::RadarTrack;
use crate::statkit::chi2_inverse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributableConfig {
    pub order: usize,
    /// Tracks longer than this (s) are fitted with `long_track_order`.
    pub long_track_span: f64,
    pub long_track_order: usize,
    /// Raise the order while the weighted residual sum fails the χ² test at
    /// `consistency_level`, up to `max_order`.
    pub adaptive: bool,
    pub max_order: usize,
    pub consistency_level: f64,
}

impl Default for AttributableConfig {
    fn default() -> Self {
        Self { order: 2, long_track_span: 60.0, long_track_order: 3, adaptive: true, max_order: 10, consistency_level: 0.5 }
    }
}

/// Stacked weighted least-squares system for one track.
#[derive(Debug, Clone)]
pub struct Design {
    pub order: usize,
    /// Reference epoch: track mid-time.
    pub t0: f64,
    /// Rows: range, elevation, azimuth (unwrapped), range rate; one block per observable.
    pub a: DMatrix<f64>,
    /// Diagonal of the weight matrix, 1/σ².
    pub w: DVector<f64>,
    pub m: DVector<f64>,
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|k| k as f64).product()
}

/// Value of the j-th basis function tʲ/j!.
fn basis(t: f64, j: usize) -> f64 {
    t.powi(j as i32) / factorial(j)
}

/// Time derivative of the j-th basis function.
fn basis_rate(t: f64, j: usize) -> f64 {
    if j == 0 {
        0.0
    } else {
        basis(t, j - 1)
    }
}

/// Azimuths moved onto a continuous branch starting at the first plot.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    for (k, &a) in angles.iter().enumerate() {
        if k == 0 {
            out.push(a);
        } else {
            let prev: f64 = out[k - 1];
            let d = (a - prev + PI).rem_euclid(TAU) - PI;
            out.push(prev + d);
        }
    }
    out
}

pub fn build_design(track: &RadarTrack, order: usize) -> Result<Design> {
    let n = track.plots.len();
    let np = order + 1;
    if order < 1 {
        return Err(Error::invalid("polynomial order must be at least 1"));
    }
    if n < np || 4 * n < 3 * np {
        return Err(Error::RankDeficient(format!("{n} plots cannot determine an order-{order} fit")));
    }
    let t0 = track.mid_epoch();
    let az = unwrap_angles(&track.plots.iter().map(|p| p.azimuth).collect::<Vec<_>>());
    let mut a = DMatrix::zeros(4 * n, 3 * np);
    let mut w = DVector::zeros(4 * n);
    let mut m = DVector::zeros(4 * n);
    for (k, p) in track.plots.iter().enumerate() {
        let t = p.epoch - t0;
        for j in 0..np {
            a[(k, j)] = basis(t, j);
            a[(n + k, np + j)] = basis(t, j);
            a[(2 * n + k, 2 * np + j)] = basis(t, j);
            a[(3 * n + k, j)] = basis_rate(t, j);
        }
        m[k] = p.range;
        m[n + k] = p.elevation;
        m[2 * n + k] = az[k];
        m[3 * n + k] = p.range_rate;
        w[k] = 1.0 / (p.sigmas.range * p.sigmas.range);
        w[n + k] = 1.0 / (p.sigmas.elevation * p.sigmas.elevation);
        w[2 * n + k] = 1.0 / (p.sigmas.azimuth * p.sigmas.azimuth);
        w[3 * n + k] = 1.0 / (p.sigmas.range_rate * p.sigmas.range_rate);
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("plot sigmas must be positive"));
    }
    Ok(Design { order, t0, a, w, m })
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub order: usize,
    pub t0: f64,
    /// (ρ_0..ρ_n, El_0..El_n, Az_0..Az_n).
    pub params: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Measurement minus model, same ordering as the design rows.
    pub residuals: DVector<f64>,
    /// υᵀWυ.
    pub weighted_sse: f64,
}

/// Weighted least squares via the SVD of the whitened, column-equilibrated design.
pub fn solve_weighted(a: &DMatrix<f64>, w: &DVector<f64>, m: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sw = w.map(f64::sqrt);
    let mut aw = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * sw[i]);
    let scale = DVector::from_fn(a.ncols(), |j, _| {
        let n = aw.column(j).norm();
        if n > 0.0 { 1.0 / n } else { 1.0 }
    });
    for j in 0..aw.ncols() {
        aw.column_mut(j).scale_mut(scale[j]);
    }
    let mw = m.component_mul(&sw);
    let svd = aw.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let tol = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    if s.iter().any(|&v| !(v > tol)) {
        return Err(Error::RankDeficient("weighted design matrix".into()));
    }
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let coeff = (u.transpose() * mw).component_div(s);
    let p = (vt.transpose() * coeff).component_mul(&scale);
    let v_scaled = DMatrix::from_fn(vt.ncols(), vt.nrows(), |i, j| vt[(j, i)] / s[j] * scale[i]);
    let cov = &v_scaled * v_scaled.transpose();
    Ok((p, cov))
}

pub fn fit(track: &RadarTrack, order: usize) -> Result<FitResult> {
    let d = build_design(track, order)?;
    let (p, cov) = solve_weighted(&d.a, &d.w, &d.m)?;
    let residuals = &d.m - &d.a * &p;
    let weighted_sse = residuals.iter().zip(d.w.iter()).map(|(r, w)| r * r * w).sum();
    Ok(FitResult { order, t0: d.t0, params: p, cov: 0.5 * (&cov + cov.transpose()), residuals, weighted_sse })
}

/// Order used for a track under `cfg`: escalated on long tracks, forced to 1 on
/// two-plot tracks.
pub fn select_order(track: &RadarTrack, cfg: &AttributableConfig) -> usize {
    let n = track.plots.len();
    let span = track.last_epoch() - track.first_epoch();
    let base = if span > cfg.long_track_span { cfg.long_track_order } else { cfg.order };
    base.min(n.saturating_sub(1)).max(1)
}

/// Virtual measurement at the track mid-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attributable {
    pub t0: f64,
    pub range: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub range_rate: f64,
    /// Covariance over (range, elevation, azimuth, range rate).
    pub cov: Matrix4<f64>,
    pub order: usize,
    pub n_plots: usize,
    pub low_quality: bool,
}

impl Attributable {
    pub fn vector(&self) -> Vector4<f64> {
        Vector4::new(self.range, self.elevation, self.azimuth, self.range_rate)
    }

    pub fn sigma_range(&self) -> f64 {
        self.cov[(0, 0)].sqrt()
    }

    pub fn sigma_range_rate(&self) -> f64 {
        self.cov[(3, 3)].sqrt()
    }
}

pub fn to_attributable(fit: &FitResult, track: &RadarTrack) -> Attributable {
    let np = fit.order + 1;
    let idx = [0, np, 2 * np, 1];
    let cov = Matrix4::from_fn(|i, j| fit.cov[(idx[i], idx[j])]);
    Attributable {
        t0: fit.t0,
        range: fit.params[0],
        elevation: fit.params[np],
        azimuth: fit.params[2 * np].rem_euclid(TAU),
        range_rate: fit.params[1],
        cov,
        order: fit.order,
        n_plots: track.plots.len(),
        low_quality: track.plots.len() <= 2,
    }
}

/// Fit with the configured order policy. With `adaptive`, the order is raised
/// while the weighted residual sum is inconsistent with the plot noise, or
/// while going two orders up (one more even and one more odd coefficient per
/// observable) reduces it significantly. Even and odd coefficients are nearly
/// decoupled about the mid-time, so a one-order look-ahead misses truncation
/// left in the other parity.
pub fn fit_adaptive(track: &RadarTrack, cfg: &AttributableConfig) -> Result<FitResult> {
    let mut f = fit(track, select_order(track, cfg))?;
    if !cfg.adaptive {
        return Ok(f);
    }
    let n = track.plots.len();
    let supports = |order: usize| order <= cfg.max_order && n > order + 1 && 4 * n > 3 * (order + 1);
    let lr_bound = chi2_inverse(cfg.consistency_level, 6);
    while supports(f.order + 1) {
        let dof = 4 * n - 3 * (f.order + 1);
        let inconsistent = f.weighted_sse > chi2_inverse(cfg.consistency_level, dof);
        let improves = supports(f.order + 2) && fit(track, f.order + 2).is_ok_and(|g| f.weighted_sse - g.weighted_sse > lr_bound);
        if !(inconsistent || improves) {
            break;
        }
        match fit(track, f.order + 1) {
            Ok(next) => f = next,
            Err(_) => break,
        }
    }
    Ok(f)
}

/// Fit with the configured order policy and read out the attributable.
pub fn compute(track: &RadarTrack, cfg: &AttributableConfig) -> Result<Attributable> {
    Ok(to_attributable(&fit_adaptive(track, cfg)?, track))
}

/// σ of the mid-track range rate when the range-rate plots are fitted on their
/// own, with a polynomial one degree below the range model.
pub fn independent_range_rate_sigma(track: &RadarTrack, order: usize) -> Result<f64> {
    let t0 = track.mid_epoch();
    let n = track.plots.len();
    if n < order {
        return Err(Error::RankDeficient("too few range-rate plots".into()));
    }
    let a = DMatrix::from_fn(n, order, |k, j| basis(track.plots[k].epoch - t0, j));
    let w = DVector::from_iterator(n, track.plots.iter().map(|p| 1.0 / (p.sigmas.range_rate * p.sigmas.range_rate)));
    let m = DVector::from_iterator(n, track.plots.iter().map(|p| p.range_rate));
    let (_, cov) = solve_weighted(&a, &w, &m)?;
    Ok(cov[(0, 0)].sqrt())
}

/// Interchange form of an attributable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributableRecord {
    pub t0_iso: String,
    pub rho0_m: f64,
    pub el0_rad: f64,
    pub az0_rad: f64,
    pub rhodot0_mps: f64,
    pub cov_rowmajor_4x4: Vec<f64>,
    pub order: usize,
    pub n_plots: usize,
    pub low_quality: bool,
}

impl From<&Attributable> for AttributableRecord {
    fn from(a: &Attributable) -> Self {
        Self {
            t0_iso: to_iso(a.t0),
            rho0_m: a.range,
            el0_rad: a.elevation,
            az0_rad: a.azimuth,
            rhodot0_mps: a.range_rate,
            cov_rowmajor_4x4: a.cov.transpose().iter().copied().collect(),
            order: a.order,
            n_plots: a.n_plots,
            low_quality: a.low_quality,
        }
    }
}

impl TryFrom<&AttributableRecord> for Attributable {
    type Error = Error;

    fn try_from(r: &AttributableRecord) -> Result<Self> {
        if r.cov_rowmajor_4x4.len() != 16 {
            return Err(Error::invalid("attributable covariance needs 16 entries"));
        }
        Ok(Self {
            t0: from_iso(&r.t0_iso)?,
            range: r.rho0_m,
            elevation: r.el0_rad,
            azimuth: r.az0_rad,
            range_rate: r.rhodot0_mps,
            cov: Matrix4::from_row_slice(&r.cov_rowmajor_4x4),
            order: r.order,
            n_plots: r.n_plots,
            low_quality: r.low_quality,
        })
    }
}
