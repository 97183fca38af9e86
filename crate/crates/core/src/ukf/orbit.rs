//! Orbit process model with LVLH random-walk process noise, radar measurement
//! model, and track-by-track filter runs.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use super::{track_metric, FilterStep, Measurement, MeasurementModel, ProcessModel, StateEstimate, TrackMetric, Ukf, UkfConfig};
use crate::dynamics::{lvlh_basis, DynamicsConfig, InertialState, Propagator, Trajectory};
use crate::epoch::to_iso;
use crate::error::{Error, Result};
use crate::radar::{observe, RadarPlot, RadarStation, RadarTrack};
use crate::statkit::ChiSquareArgument;

/// Which plot observables enter the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSubset {
    #[default]
    RangeRangeRate,
    /// Range, range rate, azimuth, elevation.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitFilterConfig {
    pub kappa: Option<f64>,
    /// Acceleration PSD along (radial, along-track, cross-track), m²/s³.
    pub q_lvlh: [f64; 3],
    /// Discretization step of the process-noise sum, s.
    pub noise_step: f64,
    /// Master switch for process noise between tracks.
    pub process_noise: bool,
    pub subset: MeasurementSubset,
    /// Appends the ballistic coefficient C_D·S/m to the state.
    pub estimate_ballistic: bool,
    /// Random-walk PSD of the ballistic coefficient, m⁴/kg²/s.
    pub ballistic_psd: f64,
    pub chi_square_argument: ChiSquareArgument,
    /// A track whose first-plot probability reaches this value is flagged.
    pub detection_threshold: f64,
}

impl Default for OrbitFilterConfig {
    fn default() -> Self {
        Self {
            kappa: None,
            q_lvlh: [5e-10, 1e-9, 5e-10],
            noise_step: 600.0,
            process_noise: true,
            subset: MeasurementSubset::RangeRangeRate,
            estimate_ballistic: false,
            ballistic_psd: 1e-16,
            chi_square_argument: ChiSquareArgument::Distance,
            detection_threshold: 0.5,
        }
    }
}

impl OrbitFilterConfig {
    pub fn ukf(&self) -> UkfConfig {
        UkfConfig { kappa: self.kappa }
    }
}

/// Second-order random-walk block for white acceleration of PSD `s` over `dt`.
pub fn random_walk_block(s: &Matrix3<f64>, dt: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(s * (dt.powi(3) / 3.0)));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(s * (dt.powi(2) / 2.0)));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(s * (dt.powi(2) / 2.0)));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(s * dt));
    m
}

/// Process-noise covariance accumulated over `total` seconds from `x`, summing one
/// random-walk block per `step` (the last one shorter) with the LVLH frame
/// re-evaluated along the propagated trajectory.
pub fn process_noise(x: &InertialState, total: f64, q_lvlh: [f64; 3], step: f64, prop: &Propagator) -> Result<Matrix6<f64>> {
    if total == 0.0 {
        return Ok(Matrix6::zeros());
    }
    if !(step > 0.0) {
        return Err(Error::invalid("process-noise step must be positive"));
    }
    let dir = total.signum();
    let span = total.abs();
    let n = (span / step).ceil() as usize;
    let psd = Matrix3::from_diagonal(&Vector3::from(q_lvlh));
    let mut q = Matrix6::zeros();
    let mut cur = *x;
    for k in 0..n {
        let dt = (span - k as f64 * step).min(step);
        let r = lvlh_basis(&cur)?;
        q += random_walk_block(&(r * psd * r.transpose()), dt);
        if k + 1 < n {
            cur = prop.propagate(&cur, cur.epoch + dir * dt, &[])?;
        }
    }
    Ok(q)
}

pub fn state_vector(x: &InertialState) -> DVector<f64> {
    DVector::from_column_slice(x.to_vector().as_slice())
}

pub fn inertial(x: &DVector<f64>, epoch: f64) -> InertialState {
    InertialState::new(epoch, Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]))
}

/// Ballistic orbit propagation as a filter process model.
#[derive(Debug, Clone)]
pub struct OrbitProcess {
    pub propagator: Propagator,
    pub q_lvlh: [f64; 3],
    pub noise_step: f64,
    pub estimate_ballistic: bool,
    pub ballistic_psd: f64,
}

impl OrbitProcess {
    pub fn new(propagator: Propagator, cfg: &OrbitFilterConfig) -> Self {
        Self {
            propagator,
            q_lvlh: cfg.q_lvlh,
            noise_step: cfg.noise_step,
            estimate_ballistic: cfg.estimate_ballistic,
            ballistic_psd: cfg.ballistic_psd,
        }
    }

    fn propagator_for(&self, x: &DVector<f64>) -> Propagator {
        if self.estimate_ballistic {
            self.propagator.with_ballistic(x[6])
        } else {
            self.propagator
        }
    }
}

impl ProcessModel for OrbitProcess {
    fn dim(&self) -> usize {
        if self.estimate_ballistic {
            7
        } else {
            6
        }
    }

    fn propagate(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let y = self.propagator_for(x).propagate(&inertial(x, t0), t1, &[])?;
        let mut out = x.clone();
        out.rows_mut(0, 6).copy_from(&state_vector(&y));
        Ok(out)
    }

    fn process_noise(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
        let q6 = process_noise(&inertial(x, t0), t1 - t0, self.q_lvlh, self.noise_step, &self.propagator_for(x))?;
        let n = self.dim();
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (6, 6)).copy_from(&q6);
        if self.estimate_ballistic {
            q[(6, 6)] = self.ballistic_psd * (t1 - t0).abs();
        }
        Ok(q)
    }
}

/// Radar observables of an orbit state.
#[derive(Debug, Clone)]
pub struct RadarMeasurementModel {
    pub station: RadarStation,
    pub dynamics: DynamicsConfig,
    pub subset: MeasurementSubset,
}

impl MeasurementModel for RadarMeasurementModel {
    fn dim(&self) -> usize {
        match self.subset {
            MeasurementSubset::RangeRangeRate => 2,
            MeasurementSubset::All => 4,
        }
    }

    fn predict(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let o = observe(&inertial(x, t), &self.station, &self.dynamics);
        Ok(match self.subset {
            MeasurementSubset::RangeRangeRate => DVector::from_vec(vec![o.range, o.range_rate]),
            MeasurementSubset::All => DVector::from_vec(vec![o.range, o.range_rate, o.azimuth, o.elevation]),
        })
    }

    fn residual(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut d = a - b;
        if self.subset == MeasurementSubset::All {
            d[2] = (d[2] + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        }
        d
    }
}

impl RadarMeasurementModel {
    pub fn measurement(&self, plot: &RadarPlot) -> Measurement {
        let s = plot.sigmas;
        match self.subset {
            MeasurementSubset::RangeRangeRate => Measurement {
                epoch: plot.epoch,
                z: DVector::from_vec(vec![plot.range, plot.range_rate]),
                r: DMatrix::from_diagonal(&DVector::from_vec(vec![s.range.powi(2), s.range_rate.powi(2)])),
            },
            MeasurementSubset::All => Measurement {
                epoch: plot.epoch,
                z: DVector::from_vec(vec![plot.range, plot.range_rate, plot.azimuth, plot.elevation]),
                r: DMatrix::from_diagonal(&DVector::from_vec(vec![
                    s.range.powi(2),
                    s.range_rate.powi(2),
                    s.azimuth.powi(2),
                    s.elevation.powi(2),
                ])),
            },
        }
    }
}

/// Filter output over a sequence of tracks.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub steps: Vec<FilterStep>,
    /// Track index of every step.
    pub track_of_step: Vec<usize>,
    pub metrics: Vec<TrackMetric>,
}

impl FilterRun {
    pub fn last(&self) -> Option<&StateEstimate> {
        self.steps.last().map(|s| &s.filtered)
    }

    /// Filtered estimate after the last plot of track `k`.
    pub fn after_track(&self, k: usize) -> Option<&StateEstimate> {
        self.track_of_step.iter().rposition(|&t| t == k).map(|i| &self.steps[i].filtered)
    }
}

/// Processes every plot of every track in order: process noise on the first
/// plot of a track (inter-track gap), none within a track.
pub fn run_tracks(
    ukf: &Ukf<OrbitProcess>,
    model: &RadarMeasurementModel,
    init: &StateEstimate,
    tracks: &[RadarTrack],
    cfg: &OrbitFilterConfig,
) -> Result<FilterRun> {
    let mut steps = Vec::new();
    let mut track_of_step = Vec::new();
    let mut metrics = Vec::new();
    let mut est = init.clone();
    for (k, track) in tracks.iter().enumerate() {
        let mut residuals = Vec::with_capacity(track.len());
        for (i, plot) in track.plots.iter().enumerate() {
            let step = ukf.step(&est, &model.measurement(plot), model, cfg.process_noise && i == 0)?;
            est = step.filtered.clone();
            residuals.push(step.residual.clone().unwrap());
            steps.push(step);
            track_of_step.push(k);
        }
        metrics.push(track_metric(&residuals, model.dim(), cfg.chi_square_argument).unwrap());
    }
    Ok(FilterRun { steps, track_of_step, metrics })
}

/// One row of the per-plot filter log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub epoch_iso: String,
    pub err_pos_m: Option<f64>,
    pub psi_i: f64,
    pub nu_rho_m: f64,
    pub nu_rhodot_mps: f64,
    #[serde(rename = "trace_P_pos")]
    pub trace_p_pos: f64,
    #[serde(rename = "trace_P_vel")]
    pub trace_p_vel: f64,
}

pub fn position_error(est: &StateEstimate, truth: &Trajectory) -> Result<f64> {
    let t = truth.state_at(est.epoch)?;
    Ok((inertial(&est.x, est.epoch).r - t.r).norm())
}

pub fn run_log(run: &FilterRun, truth: Option<&Trajectory>) -> Result<Vec<RunLogRow>> {
    run.steps
        .iter()
        .filter_map(|s| s.residual.as_ref().map(|r| (s, r)))
        .map(|(s, r)| {
            let f = &s.filtered;
            Ok(RunLogRow {
                epoch_iso: to_iso(f.epoch),
                err_pos_m: truth.map(|t| position_error(f, t)).transpose()?,
                psi_i: r.psi,
                nu_rho_m: r.nu[0],
                nu_rhodot_mps: r.nu[1],
                trace_p_pos: (0..3).map(|i| f.p[(i, i)]).sum(),
                trace_p_vel: (3..6).map(|i| f.p[(i, i)]).sum(),
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
