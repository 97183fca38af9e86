//! Unscented Kalman filter, fixed-interval smoother and innovation metrics.
//!
//! The filter core is generic over the process and measurement models; the
//! orbit-specific models live in [`orbit`].

mod metrics;
pub mod orbit;
mod sigma;
mod smoother;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{track_metric, TrackMetric};
pub use sigma::{cross_covariance, robust_cholesky, sigma_points, weighted_moments, SigmaPoints};
pub use smoother::{rts_smooth, SmoothedState};

/// Filter belief at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub epoch: f64,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl StateEstimate {
    pub fn new(epoch: f64, x: DVector<f64>, p: DMatrix<f64>) -> Self {
        Self { epoch, x, p }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

pub trait ProcessModel: Sync {
    fn dim(&self) -> usize;
    fn propagate(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>>;
    /// Covariance increment accumulated from `t0` to `t1` along the trajectory
    /// through `x` at `t0`.
    fn process_noise(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>>;
}

pub trait MeasurementModel: Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
    /// a − b, with any angular components wrapped.
    fn residual(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        a - b
    }
}

/// One measurement to assimilate.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub epoch: f64,
    pub z: DVector<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    /// Unscented spread parameter; `None` selects 3 − n.
    pub kappa: Option<f64>,
}

impl UkfConfig {
    pub fn kappa_for(&self, n: usize) -> f64 {
        self.kappa.unwrap_or(3.0 - n as f64)
    }
}

/// Innovation of one plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotResidual {
    pub epoch: f64,
    pub nu: DVector<f64>,
    pub s: DMatrix<f64>,
    pub psi: f64,
}

/// Predicted state with the cross-covariance back to the prior, kept for smoothing.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub est: StateEstimate,
    /// Cov(x_prior, x_predicted).
    pub cross: DMatrix<f64>,
}

/// Stored record of one filter call.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub predicted: StateEstimate,
    pub cross: DMatrix<f64>,
    pub filtered: StateEstimate,
    pub residual: Option<PlotResidual>,
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (p + p.transpose())
}

#[derive(Debug, Clone)]
pub struct Ukf<P: ProcessModel> {
    pub process: P,
    pub cfg: UkfConfig,
}

impl<P: ProcessModel> Ukf<P> {
    pub fn new(process: P, cfg: UkfConfig) -> Self {
        Self { process, cfg }
    }

    fn kappa(&self, est: &StateEstimate) -> f64 {
        self.cfg.kappa_for(est.dim())
    }

    /// Sigma-point time update to `t`; adds process noise when asked.
    pub fn predict(&self, est: &StateEstimate, t: f64, with_process_noise: bool) -> Result<Prediction> {
        let sp = sigma_points(&est.x, &est.p, self.kappa(est))?;
        let moved: Vec<DVector<f64>> = sp
            .points
            .par_iter()
            .map(|x| self.process.propagate(x, est.epoch, t))
            .collect::<Result<_>>()?;
        let (x, mut p) = weighted_moments(&moved, &sp.wm, &sp.wc, |a, b| a - b);
        let cross = cross_covariance(&sp.points, &est.x, &moved, &x, &sp.wc, |a, b| a - b);
        if with_process_noise && t != est.epoch {
            p += self.process.process_noise(&est.x, est.epoch, t)?;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { epoch: t });
        }
        Ok(Prediction { est: StateEstimate::new(t, x, symmetrize(&p)), cross })
    }

    /// Measurement update of a predicted state at the measurement epoch.
    pub fn update<M: MeasurementModel>(&self, prior: &StateEstimate, meas: &Measurement, model: &M) -> Result<(StateEstimate, PlotResidual)> {
        let sp = sigma_points(&prior.x, &prior.p, self.kappa(prior))?;
        let ys: Vec<DVector<f64>> = sp.points.iter().map(|x| model.predict(x, meas.epoch)).collect::<Result<_>>()?;
        let res = |a: &DVector<f64>, b: &DVector<f64>| model.residual(a, b);
        let (y_hat, s0) = weighted_moments(&ys, &sp.wm, &sp.wc, res);
        let s = symmetrize(&(s0 + &meas.r));
        let v = cross_covariance(&sp.points, &prior.x, &ys, &y_hat, &sp.wc, res);
        let chol = s.clone().cholesky().ok_or_else(|| Error::Covariance("innovation covariance".into()))?;
        let nu = model.residual(&meas.z, &y_hat);
        // K = V S⁻¹, computed as (S⁻¹ Vᵀ)ᵀ
        let k = chol.solve(&v.transpose()).transpose();
        let x = &prior.x + &k * &nu;
        let p = symmetrize(&(&prior.p - &k * &s * k.transpose()));
        let psi = nu.dot(&chol.solve(&nu)).max(0.0).sqrt();
        Ok((StateEstimate::new(meas.epoch, x, p), PlotResidual { epoch: meas.epoch, nu, s, psi }))
    }

    /// Predict to the measurement epoch, then update.
    pub fn step<M: MeasurementModel>(&self, est: &StateEstimate, meas: &Measurement, model: &M, with_process_noise: bool) -> Result<FilterStep> {
        if meas.epoch < est.epoch {
            return Err(Error::invalid("measurement precedes the current estimate"));
        }
        let pred = self.predict(est, meas.epoch, with_process_noise)?;
        let (filtered, residual) = self.update(&pred.est, meas, model)?;
        Ok(FilterStep { predicted: pred.est, cross: pred.cross, filtered, residual: Some(residual) })
    }

    /// Time update without a measurement (a waypoint in the stored history).
    pub fn coast(&self, est: &StateEstimate, t: f64, with_process_noise: bool) -> Result<FilterStep> {
        let pred = self.predict(est, t, with_process_noise)?;
        Ok(FilterStep { predicted: pred.est.clone(), cross: pred.cross, filtered: pred.est, residual: None })
    }
}
