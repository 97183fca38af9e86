//! Manoeuvre detection filter: the orbit UKF with an attributable consistency
//! check before every track, predicted-covariance doubling while the check
//! fails, and long smoothing across the previous gap when it passes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attributable::{self, Attributable, AttributableConfig};
use crate::epoch::to_iso;
use crate::error::{Error, Result};
use crate::radar::RadarTrack;
use crate::statkit::{pr_md, ChiSquareArgument};
use crate::ukf::orbit::{position_error, OrbitFilterConfig, OrbitProcess, RadarMeasurementModel};
use crate::ukf::{rts_smooth, sigma_points, track_metric, weighted_moments, FilterStep, MeasurementModel, StateEstimate, TrackMetric, Ukf};
use crate::dynamics::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdfConfig {
    /// Maximum number of covariance doublings per track.
    pub inflation_cap: u32,
    pub threshold: f64,
    pub long_smoothing: bool,
    /// Prediction-only waypoints inserted evenly in each inter-track gap.
    pub gap_waypoints: usize,
    pub chi_square_argument: ChiSquareArgument,
}

impl Default for MdfConfig {
    fn default() -> Self {
        Self {
            inflation_cap: 10,
            threshold: 0.5,
            long_smoothing: true,
            gap_waypoints: 0,
            chi_square_argument: ChiSquareArgument::Distance,
        }
    }
}

/// Outcome of the attributable check at one track.
#[derive(Debug, Clone, PartialEq)]
pub struct InflationLog {
    /// Probability after 0, 1, … doublings.
    pub probabilities: Vec<f64>,
    /// det(P̄) after 0, 1, … doublings.
    pub determinants: Vec<f64>,
    pub doublings: u32,
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct MdfTrackOutcome {
    pub track: usize,
    pub attributable: Attributable,
    pub p_manoeuvre: f64,
    pub manoeuvre: bool,
    pub inflation: InflationLog,
    pub smoothed: bool,
    pub metric: TrackMetric,
    /// Estimate after the last plot (after long smoothing when performed).
    pub estimate: StateEstimate,
    /// Prior mean used for the first plot of the track.
    pub prior_mean: DVector<f64>,
}

/// Filter state carried between tracks.
#[derive(Debug, Clone)]
pub struct MdfState {
    pub estimate: StateEstimate,
    /// Steps since the last plot of the previous track, that step included.
    pub history: Vec<FilterStep>,
}

impl MdfState {
    pub fn new(init: StateEstimate) -> Self {
        Self { estimate: init, history: Vec::new() }
    }
}

pub struct Mdf<'a> {
    pub ukf: &'a Ukf<OrbitProcess>,
    pub model: &'a RadarMeasurementModel,
    pub filter: OrbitFilterConfig,
    pub cfg: MdfConfig,
    pub attributable: AttributableConfig,
}

/// Probability that `att` is inconsistent with the prediction (`x`, `p`) at its epoch.
fn attributable_probability(ukf: &Ukf<OrbitProcess>, model: &RadarMeasurementModel, x: &DVector<f64>, p: &DMatrix<f64>, att: &Attributable, arg: ChiSquareArgument) -> Result<f64> {
    let sp = sigma_points(x, p, ukf.cfg.kappa_for(x.len()))?;
    let rr = RadarMeasurementModel { subset: crate::ukf::orbit::MeasurementSubset::RangeRangeRate, ..model.clone() };
    let ys: Vec<DVector<f64>> = sp.points.iter().map(|s| rr.predict(s, att.t0)).collect::<Result<_>>()?;
    let (y_hat, s0) = weighted_moments(&ys, &sp.wm, &sp.wc, |a, b| a - b);
    let sa = DMatrix::from_row_slice(2, 2, &[att.cov[(0, 0)], att.cov[(0, 3)], att.cov[(3, 0)], att.cov[(3, 3)]]);
    let s = s0 + sa;
    let nu = DVector::from_vec(vec![att.range - y_hat[0], att.range_rate - y_hat[1]]);
    let chol = s.cholesky().ok_or_else(|| Error::Covariance("attributable innovation covariance".into()))?;
    let md = nu.dot(&chol.solve(&nu)).max(0.0).sqrt();
    Ok(pr_md(md, 2, arg))
}

impl Mdf<'_> {
    /// Attributable check with the doubling loop, on the prediction to the attributable epoch.
    pub fn check(&self, est: &StateEstimate, att: &Attributable) -> Result<InflationLog> {
        let pred = self.ukf.predict(est, att.t0, self.filter.process_noise)?;
        let mut p = pred.est.p.clone();
        let mut probabilities = vec![attributable_probability(self.ukf, self.model, &pred.est.x, &p, att, self.cfg.chi_square_argument)?];
        let mut determinants = vec![p.determinant()];
        let mut doublings = 0;
        while *probabilities.last().unwrap() >= self.cfg.threshold && doublings < self.cfg.inflation_cap {
            p *= 2.0;
            doublings += 1;
            probabilities.push(attributable_probability(self.ukf, self.model, &pred.est.x, &p, att, self.cfg.chi_square_argument)?);
            determinants.push(p.determinant());
        }
        let saturated = *probabilities.last().unwrap() >= self.cfg.threshold;
        Ok(InflationLog { probabilities, determinants, doublings, saturated })
    }

    /// Plot-by-plot filtering of `track` from `est`, the first prediction scaled by 2^doublings.
    fn filter_track(&self, est: &StateEstimate, track: &RadarTrack, doublings: u32) -> Result<Vec<FilterStep>> {
        let mut steps = Vec::with_capacity(track.len() + self.cfg.gap_waypoints);
        let mut cur = est.clone();
        let first = track.first_epoch();
        for w in 1..=self.cfg.gap_waypoints {
            let t = est.epoch + (first - est.epoch) * w as f64 / (self.cfg.gap_waypoints + 1) as f64;
            let s = self.ukf.coast(&cur, t, self.filter.process_noise)?;
            cur = s.filtered.clone();
            steps.push(s);
        }
        for (i, plot) in track.plots.iter().enumerate() {
            let meas = self.model.measurement(plot);
            let mut pred = self.ukf.predict(&cur, plot.epoch, self.filter.process_noise && i == 0)?;
            if i == 0 && doublings > 0 {
                pred.est.p *= 2f64.powi(doublings as i32);
            }
            let (filtered, residual) = self.ukf.update(&pred.est, &meas, self.model)?;
            cur = filtered.clone();
            steps.push(FilterStep { predicted: pred.est, cross: pred.cross, filtered, residual: Some(residual) });
        }
        Ok(steps)
    }

    pub fn process_track(&self, state: &mut MdfState, track_index: usize, track: &RadarTrack) -> Result<(MdfTrackOutcome, Vec<FilterStep>)> {
        let att = attributable::compute(track, &self.attributable)?;
        if !(att.t0 > state.estimate.epoch) {
            return Err(Error::invalid("track must follow the current estimate"));
        }
        let log = self.check(&state.estimate, &att)?;
        let first_p = log.probabilities[0];
        let manoeuvre = first_p >= self.cfg.threshold;
        let p_manoeuvre = if log.saturated { 1.0 } else { first_p };
        let prior_mean = state.estimate.x.clone();
        let mut steps = self.filter_track(&state.estimate, track, log.doublings)?;

        let mut smoothed = false;
        if !manoeuvre && self.cfg.long_smoothing && !state.history.is_empty() {
            let mut window = state.history[state.history.len() - 1..].to_vec();
            window.extend(steps.iter().cloned());
            let boundary = long_smooth(&window, manoeuvre)?;
            steps = self.filter_track(&boundary, track, 0)?;
            smoothed = true;
        }

        let residuals: Vec<_> = steps.iter().filter_map(|s| s.residual.clone()).collect();
        let metric = track_metric(&residuals, self.model.dim(), self.filter.chi_square_argument).unwrap();
        state.estimate = steps.last().unwrap().filtered.clone();
        state.history = vec![steps.last().unwrap().clone()];
        Ok((
            MdfTrackOutcome {
                track: track_index,
                attributable: att,
                p_manoeuvre,
                manoeuvre,
                inflation: log,
                smoothed,
                metric,
                estimate: state.estimate.clone(),
                prior_mean,
            },
            steps,
        ))
    }
}

/// Backward pass over `window` (previous track end through the current track);
/// returns the smoothed estimate at the start of the window.
pub fn long_smooth(window: &[FilterStep], manoeuvre_declared: bool) -> Result<StateEstimate> {
    if manoeuvre_declared {
        return Err(Error::SmoothingRefused);
    }
    if window.is_empty() {
        return Err(Error::invalid("empty smoothing window"));
    }
    Ok(rts_smooth(window)?.swap_remove(0))
}

#[derive(Debug, Clone)]
pub struct MdfRun {
    pub outcomes: Vec<MdfTrackOutcome>,
    pub steps: Vec<FilterStep>,
    pub track_of_step: Vec<usize>,
}

impl MdfRun {
    pub fn after_track(&self, k: usize) -> Option<&StateEstimate> {
        self.outcomes.iter().find(|o| o.track == k).map(|o| &o.estimate)
    }
}

pub fn run(mdf: &Mdf<'_>, init: &StateEstimate, tracks: &[RadarTrack]) -> Result<MdfRun> {
    let mut state = MdfState::new(init.clone());
    let mut outcomes = Vec::with_capacity(tracks.len());
    let mut all = Vec::new();
    let mut track_of_step = Vec::new();
    for (k, t) in tracks.iter().enumerate() {
        let (o, steps) = mdf.process_track(&mut state, k, t)?;
        track_of_step.extend(std::iter::repeat_n(k, steps.len()));
        all.extend(steps);
        outcomes.push(o);
    }
    Ok(MdfRun { outcomes, steps: all, track_of_step })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdfLogRow {
    pub epoch_iso: String,
    pub err_pos_m: Option<f64>,
    pub psi_i: f64,
    pub nu_rho_m: f64,
    pub nu_rhodot_mps: f64,
    #[serde(rename = "trace_P_pos")]
    pub trace_p_pos: f64,
    #[serde(rename = "trace_P_vel")]
    pub trace_p_vel: f64,
    pub p_manoeuvre: f64,
    pub inflations: u32,
    pub smoothed: bool,
}

pub fn run_log(run: &MdfRun, truth: Option<&Trajectory>) -> Result<Vec<MdfLogRow>> {
    let mut rows = Vec::new();
    for (s, &k) in run.steps.iter().zip(&run.track_of_step) {
        let Some(r) = &s.residual else { continue };
        let o = run.outcomes.iter().find(|o| o.track == k).unwrap();
        let f = &s.filtered;
        rows.push(MdfLogRow {
            epoch_iso: to_iso(f.epoch),
            err_pos_m: truth.map(|t| position_error(f, t)).transpose()?,
            psi_i: r.psi,
            nu_rho_m: r.nu[0],
            nu_rhodot_mps: r.nu[1],
            trace_p_pos: (0..3).map(|i| f.p[(i, i)]).sum(),
            trace_p_vel: (3..6).map(|i| f.p[(i, i)]).sum(),
            p_manoeuvre: o.p_manoeuvre,
            inflations: o.inflation.doublings,
            smoothed: o.smoothed,
        });
    }
    Ok(rows)
}
