//! Simulated study: scenario grid, detector campaigns and reports.

mod campaign;
mod external;
mod report;
mod scenario;

use nalgebra::{DMatrix, DVector, Matrix6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{inertial_covariance_to_lvlh, lvlh_covariance_to_inertial, DynamicsConfig, InertialState, KeplerianElements, ManoeuvreSpec, SpacecraftParams};
use crate::error::{Error, Result};
use crate::radar::RadarStation;
use crate::ukf::{robust_cholesky, StateEstimate};

pub use campaign::*;
pub use external::*;
pub use report::*;
pub use scenario::*;

const HOUR: f64 = 3600.0;
const DAY: f64 = 86400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub elements: KeplerianElements,
    pub truth_params: SpacecraftParams,
    pub model_params: SpacecraftParams,
    pub station: RadarStation,
    pub span_days: f64,
    pub min_plots: usize,
    /// Thrust acceleration of grid manoeuvres, m/s².
    pub grid_acceleration: f64,
    pub intensities: Vec<Intensity>,
    pub offsets_hours: Vec<f64>,
    pub directions: Vec<Direction>,
    pub repetitions: u32,
    /// The manoeuvred track must follow a gap at least this long.
    pub min_target_gap_hours: f64,
    /// The manoeuvred track must have at least this many plots.
    pub min_target_plots: usize,
    /// One-sigma LVLH position error of reachability-detector initial states, m.
    pub init_sigma_position: f64,
    /// One-sigma LVLH velocity error of reachability-detector initial states, m/s.
    pub init_sigma_velocity: f64,
    /// Draw the initial mean from the initial covariance around truth instead of using truth itself.
    pub perturb_initial_mean: bool,
    /// Filter start covariance in LVLH axes, row-major 6×6.
    pub filter_initial_covariance: Vec<f64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            elements: KeplerianElements {
                a: 7_078_137.0,
                e: 0.001,
                i: 98.2f64.to_radians(),
                raan: 0.5,
                argp: 0.0,
                mean_anomaly: 0.0,
            },
            truth_params: SpacecraftParams { drag_coefficient: 2.2, drag_area: 10.0, ..SpacecraftParams::default() },
            model_params: SpacecraftParams { drag_coefficient: 2.0, drag_area: 9.5, ..SpacecraftParams::default() },
            station: RadarStation {
                azimuth_window: Some([150f64.to_radians(), 210f64.to_radians()]),
                ..RadarStation::default()
            },
            span_days: 4.0,
            min_plots: 5,
            grid_acceleration: 1e-3,
            intensities: Intensity::ALL.to_vec(),
            offsets_hours: vec![2.0, 6.0, 12.0],
            directions: Direction::ALL.to_vec(),
            repetitions: 10,
            min_target_gap_hours: 12.0,
            min_target_plots: 10,
            init_sigma_position: 1.0,
            init_sigma_velocity: 1e-3,
            perturb_initial_mean: true,
            filter_initial_covariance: DEFAULT_FILTER_COVARIANCE.to_vec(),
        }
    }
}

/// Post-convergence filter covariance (LVLH, m and m/s) from [`warm_up_covariance`]
/// on the default scenario seeded with diag(100 m, 0.1 m/s)², rounded to four digits.
pub const DEFAULT_FILTER_COVARIANCE: [f64; 36] = [
    8.983e1, 1.288e1, -2.201e2, -3.136e-2, -8.872e-2, 2.463e-2, //
    1.288e1, 7.090e1, -1.813e2, -1.097e-1, -2.056e-2, 6.308e-2, //
    -2.201e2, -1.813e2, 9.227e2, 3.390e-1, 2.484e-1, -1.804e-1, //
    -3.136e-2, -1.097e-1, 3.390e-1, 3.615e-4, 7.883e-5, -2.542e-4, //
    -8.872e-2, -2.056e-2, 2.484e-1, 7.883e-5, 1.243e-4, -3.626e-5, //
    2.463e-2, 6.308e-2, -1.804e-1, -2.542e-4, -3.626e-5, 6.764e-4,
];

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_initial_covariance.len() != 36 {
            return Err(Error::invalid("filter_initial_covariance needs 36 entries"));
        }
        if !(self.init_sigma_position > 0.0 && self.init_sigma_velocity > 0.0) {
            return Err(Error::invalid("initial sigmas must be positive"));
        }
        if !(self.span_days > 0.0) || self.repetitions == 0 {
            return Err(Error::invalid("span and repetitions must be positive"));
        }
        Ok(())
    }

    pub fn filter_covariance_lvlh(&self) -> Matrix6<f64> {
        Matrix6::from_row_slice(&self.filter_initial_covariance)
    }

    /// Diagonal LVLH covariance of reachability-detector initial states.
    pub fn detector_covariance_lvlh(&self) -> Matrix6<f64> {
        let p = self.init_sigma_position.powi(2);
        let v = self.init_sigma_velocity.powi(2);
        Matrix6::from_diagonal(&nalgebra::Vector6::new(p, p, p, v, v, v))
    }

    /// Spec without manoeuvres spanning the configured time window.
    pub fn base_spec(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            id: "nominal".into(),
            elements: self.elements,
            truth_params: self.truth_params,
            model_params: self.model_params,
            station: self.station.clone(),
            t_start: 0.0,
            t_end: self.span_days * DAY,
            manoeuvres: Vec::new(),
            seed,
            min_plots: self.min_plots,
            tags: None,
            repetition: 0,
        }
    }
}

/// Estimate around the truth state `x` with LVLH covariance `cov_lvlh`. With
/// `perturb`, the mean is drawn from that covariance.
pub fn initial_estimate(x: &InertialState, cov_lvlh: &Matrix6<f64>, perturb: bool, seed: u64) -> Result<StateEstimate> {
    let p = DMatrix::from_iterator(6, 6, lvlh_covariance_to_inertial(x, cov_lvlh)?.iter().copied());
    let mut mean = DVector::from_column_slice(x.to_vector().as_slice());
    if perturb {
        let l = robust_cholesky(&p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        mean += l * z;
    }
    Ok(StateEstimate::new(x.epoch, mean, p))
}

/// Runs the filter over the manoeuvre-free scenario of `cfg`, started from
/// `seed_cov_lvlh`, and returns the final covariance in LVLH axes.
pub fn warm_up_covariance(cfg: &crate::Config, seed_cov_lvlh: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let (scenario, _) = generate_scenario(&cfg.harness.base_spec(cfg.seed), &cfg.dynamics)?;
    let x0 = scenario.truth.state_at(scenario.spec.t_start)?;
    let init = initial_estimate(&x0, seed_cov_lvlh, true, mix_seed(cfg.seed, 0xF11))?;
    let (ukf, model) = filter_models(&scenario, cfg);
    let run = crate::ukf::orbit::run_tracks(&ukf, &model, &init, &scenario.tracks, &cfg.filter)?;
    let last = run.last().ok_or(Error::NoPasses)?;
    let p = Matrix6::from_iterator(last.p.view((0, 0), (6, 6)).iter().copied());
    let x = crate::ukf::orbit::inertial(&last.x, last.epoch);
    let l = inertial_covariance_to_lvlh(&x, &p)?;
    Ok((l + l.transpose()) * 0.5)
}

/// Index of the first track with at least `min_plots` plots, preceded by a gap
/// of at least `min_gap` seconds and followed by at least two more tracks.
pub fn target_track(scenario: &Scenario, min_gap: f64, min_plots: usize) -> Option<usize> {
    let t = &scenario.tracks;
    (1..t.len().saturating_sub(2)).find(|&k| t[k].len() >= min_plots && t[k].first_epoch() - t[k - 1].last_epoch() >= min_gap)
}

/// The simulated manoeuvre grid: every (intensity, offset, direction)
/// combination, repeated with independent seeds. The burn of each spec
/// starts `offset` before the first plot of the target track found on the
/// manoeuvre-free scenario. Also returns that scenario's specs (one per
/// repetition) as manoeuvre-free controls.
pub fn grid_specs(cfg: &HarnessConfig, dynamics: &DynamicsConfig, seed: u64) -> Result<GridSpecs> {
    cfg.validate()?;
    let base = cfg.base_spec(seed);
    let (nominal, _) = generate_scenario(&base, dynamics)?;
    // The earliest burn must start after the preceding track.
    let longest_burn = cfg.intensities.iter().map(|i| i.burn_duration()).fold(0.0, f64::max);
    let earliest = cfg.offsets_hours.iter().cloned().fold(0.0, f64::max) * HOUR + longest_burn;
    let min_gap = (cfg.min_target_gap_hours * HOUR).max(earliest);
    let k = target_track(&nominal, min_gap, cfg.min_target_plots).ok_or_else(|| Error::invalid("no track follows a gap long enough for the grid offsets"))?;
    let target_epoch = nominal.tracks[k].first_epoch();

    let mut controls = Vec::new();
    let mut specs = Vec::new();
    for rep in 0..cfg.repetitions {
        let rep_seed = mix_seed(seed, rep as u64);
        controls.push(ScenarioSpec { id: format!("none-r{rep:02}"), seed: rep_seed, repetition: rep, ..base.clone() });
        for &intensity in &cfg.intensities {
            for &offset in &cfg.offsets_hours {
                for &direction in &cfg.directions {
                    let burn = ManoeuvreSpec {
                        start_epoch: target_epoch - offset * HOUR,
                        duration: intensity.burn_duration(),
                        accel_lvlh: direction.unit() * cfg.grid_acceleration,
                    };
                    specs.push(ScenarioSpec {
                        id: format!("{intensity}-{offset}h-{direction}-r{rep:02}"),
                        manoeuvres: vec![burn],
                        seed: rep_seed,
                        tags: Some(GridTags { intensity, offset_hours: offset, direction }),
                        repetition: rep,
                        ..base.clone()
                    });
                }
            }
        }
    }
    Ok(GridSpecs { target_epoch, controls, specs })
}

#[derive(Debug, Clone)]
pub struct GridSpecs {
    /// First plot of the manoeuvred track on the manoeuvre-free scenario.
    pub target_epoch: f64,
    pub controls: Vec<ScenarioSpec>,
    pub specs: Vec<ScenarioSpec>,
}
