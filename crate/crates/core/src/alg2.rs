//! Minimum-energy reachability check.
//!
//! The gap between the initial estimate and the attributable epoch is cut into
//! legs with constant LVLH acceleration on each. Linearized about the ballistic
//! nominal, the terminal range and range rate are affine in the leg
//! accelerations, so the smallest ∫|u|² dt meeting a given (ρ, ρ̇) comes from a
//! 2×2 solve. Sampling the initial state and the attributable gives a
//! distribution of that energy, which is compared with reference distributions
//! built from synthetic manoeuvre-free attributables.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x6, Matrix6, Matrix6x3, SMatrix, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributable::Attributable;
use crate::dynamics::{DynamicsConfig, InertialState, ManoeuvreSpec, Propagator};
use crate::error::{Error, Result};
use crate::radar::{observe, RadarStation};
use crate::statkit::{log_grid, EmpiricalCdf, GridCdf};
use crate::ukf::{robust_cholesky, StateEstimate};

/// Which P-metric drives the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PMetric {
    #[default]
    P1M,
    P5M,
    P8M,
    P1D,
    P5D,
    P8D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alg2Config {
    pub legs: usize,
    pub samples: usize,
    pub replicates: usize,
    pub grid_points: usize,
    pub decision_metric: PMetric,
    pub threshold: f64,
    pub max_drop_fraction: f64,
    /// Finite-difference acceleration for the leg input matrices, m/s².
    pub accel_perturbation: f64,
}

impl Default for Alg2Config {
    fn default() -> Self {
        Self {
            legs: 16,
            samples: 1000,
            replicates: 200,
            grid_points: 200,
            decision_metric: PMetric::P1M,
            threshold: 0.5,
            max_drop_fraction: 0.01,
            accel_perturbation: 1e-5,
        }
    }
}

/// Linearized problem about the ballistic nominal.
#[derive(Debug, Clone)]
pub struct ShootingProblem {
    /// Leg boundaries, `legs + 1` epochs from the estimate to the attributable epoch.
    pub epochs: Vec<f64>,
    pub nominal: Vec<InertialState>,
    /// Φ over each leg.
    pub leg_stm: Vec<Matrix6<f64>>,
    /// Terminal state sensitivity to the constant LVLH acceleration of each leg.
    pub leg_input: Vec<Matrix6x3<f64>>,
    /// Φ from the first to the last epoch.
    pub stm_total: Matrix6<f64>,
    /// ∂(ρ, ρ̇)/∂x at the terminal epoch.
    pub h: Matrix2x6<f64>,
    pub y_nominal: Vector2<f64>,
}

impl ShootingProblem {
    pub fn legs(&self) -> usize {
        self.leg_input.len()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.epochs.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn total_time(&self) -> f64 {
        self.epochs.last().unwrap() - self.epochs[0]
    }

    /// Constraint blocks H·E_k, one 2×3 matrix per leg.
    pub fn constraint_blocks(&self) -> Vec<DMatrix<f64>> {
        self.leg_input
            .iter()
            .map(|e| {
                let c: SMatrix<f64, 2, 3> = self.h * e;
                DMatrix::from_column_slice(2, 3, c.as_slice())
            })
            .collect()
    }
}

fn range_and_rate(x: &InertialState, station: &RadarStation, dynamics: &DynamicsConfig) -> Vector2<f64> {
    let o = observe(x, station, dynamics);
    Vector2::new(o.range, o.range_rate)
}

/// Central-difference Jacobian of (ρ, ρ̇) with respect to the state.
pub fn range_rate_jacobian(x: &InertialState, station: &RadarStation, dynamics: &DynamicsConfig) -> Matrix2x6<f64> {
    let y = x.to_vector();
    let mut h = Matrix2x6::zeros();
    for j in 0..6 {
        let d = if j < 3 { 1.0 } else { 1e-3 };
        let mut yp = y;
        yp[j] += d;
        let mut ym = y;
        ym[j] -= d;
        let fp = range_and_rate(&InertialState::from_vector(x.epoch, &yp), station, dynamics);
        let fm = range_and_rate(&InertialState::from_vector(x.epoch, &ym), station, dynamics);
        h.set_column(j, &((fp - fm) / (2.0 * d)));
    }
    h
}

pub fn build_problem(x0: &InertialState, t_end: f64, station: &RadarStation, dynamics: &DynamicsConfig, prop: &Propagator, legs: usize, accel_perturbation: f64) -> Result<ShootingProblem> {
    if legs == 0 {
        return Err(Error::invalid("at least one leg required"));
    }
    if !(t_end > x0.epoch) {
        return Err(Error::invalid("attributable epoch must follow the initial estimate"));
    }
    let span = t_end - x0.epoch;
    let epochs: Vec<f64> = (0..=legs).map(|k| if k == legs { t_end } else { x0.epoch + span * k as f64 / legs as f64 }).collect();
    let mut nominal = vec![*x0];
    for &t in &epochs[1..] {
        let next = prop.propagate(nominal.last().unwrap(), t, &[])?;
        nominal.push(next);
    }
    let work: Vec<(Matrix6<f64>, Matrix6x3<f64>)> = (0..legs)
        .into_par_iter()
        .map(|k| {
            let phi = prop.stm(&nominal[k], epochs[k + 1])?.phi;
            let mut g = Matrix6x3::zeros();
            for axis in 0..3 {
                let mut col = Vector6::zeros();
                for sign in [1.0, -1.0] {
                    let mut a = Vector3::zeros();
                    a[axis] = sign * accel_perturbation;
                    let burn = ManoeuvreSpec { start_epoch: epochs[k], duration: epochs[k + 1] - epochs[k], accel_lvlh: a };
                    col += sign * prop.propagate(&nominal[k], epochs[k + 1], &[burn])?.to_vector();
                }
                g.set_column(axis, &(col / (2.0 * accel_perturbation)));
            }
            Ok((phi, g))
        })
        .collect::<Result<_>>()?;
    let leg_stm: Vec<Matrix6<f64>> = work.iter().map(|w| w.0).collect();
    // Φ(t_f, t_{k+1}) for every leg, accumulated backwards.
    let mut to_end = vec![Matrix6::identity(); legs];
    for k in (0..legs.saturating_sub(1)).rev() {
        to_end[k] = to_end[k + 1] * leg_stm[k + 1];
    }
    let leg_input = (0..legs).map(|k| to_end[k] * work[k].1).collect();
    let stm_total = to_end[0] * leg_stm[0];
    let end = nominal.last().unwrap();
    Ok(ShootingProblem {
        h: range_rate_jacobian(end, station, dynamics),
        y_nominal: range_and_rate(end, station, dynamics),
        epochs,
        nominal,
        leg_stm,
        leg_input,
        stm_total,
    })
}

/// Minimum of Σ_k δt_k |u_k|² subject to Σ_k C_k u_k = d, returned as the
/// per-leg velocity increments Δv_k = u_k δt_k and the minimum value.
///
/// With M = Σ_k C_k C_kᵀ / δt_k the optimum is Δv_k = C_kᵀ M⁻¹ d and the
/// minimum is dᵀ M⁻¹ d.
pub fn min_energy(blocks: &[DMatrix<f64>], durations: &[f64], d: &DVector<f64>) -> Result<(Vec<DVector<f64>>, f64)> {
    let m = gram(blocks, durations);
    let lambda = solve_gram(&m, d)?;
    let dv = blocks.iter().map(|c| c.transpose() * &lambda).collect();
    Ok((dv, d.dot(&lambda).max(0.0)))
}

fn gram(blocks: &[DMatrix<f64>], durations: &[f64]) -> DMatrix<f64> {
    let r = blocks[0].nrows();
    let mut m = DMatrix::zeros(r, r);
    for (c, dt) in blocks.iter().zip(durations) {
        m += c * c.transpose() / *dt;
    }
    m
}

fn check_rank(m: &DMatrix<f64>) -> Result<()> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if !(eig.eigenvalues.min() > 1e-12 * max) {
        return Err(Error::RankDeficient("terminal constraint is not controllable".into()));
    }
    Ok(())
}

fn solve_gram(m: &DMatrix<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
    check_rank(m)?;
    m.clone().cholesky().map(|c| c.solve(d)).ok_or_else(|| Error::RankDeficient("constraint Gram matrix".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVSolution {
    /// Per-leg velocity increments in LVLH axes, m/s.
    pub delta_v: Vec<Vector3<f64>>,
    /// Σ|Δv_k|²/δt_k, m²/s³.
    pub energy: f64,
    pub total_delta_v: f64,
}

/// Solves for the terminal (ρ, ρ̇) offset `d` from the nominal.
pub fn solve_offset(prob: &ShootingProblem, d: &Vector2<f64>) -> Result<DeltaVSolution> {
    let (dv, j) = min_energy(&prob.constraint_blocks(), &prob.durations(), &DVector::from_column_slice(d.as_slice()))?;
    let delta_v: Vec<Vector3<f64>> = dv.iter().map(|v| Vector3::new(v[0], v[1], v[2])).collect();
    let total_delta_v = delta_v.iter().map(|v| v.norm()).sum();
    Ok(DeltaVSolution { delta_v, energy: j, total_delta_v })
}

pub fn solve_min_energy(prob: &ShootingProblem, target: &Vector2<f64>) -> Result<DeltaVSolution> {
    solve_offset(prob, &(target - prob.y_nominal))
}

/// Precomputed pieces shared by every Monte Carlo sample.
struct FastSolver {
    m_inv: Matrix2<f64>,
    blocks: Vec<SMatrix<f64, 2, 3>>,
    sens: Matrix2x6<f64>,
    y_nominal: Vector2<f64>,
}

impl FastSolver {
    fn new(prob: &ShootingProblem) -> Result<Self> {
        let blocks: Vec<SMatrix<f64, 2, 3>> = prob.leg_input.iter().map(|e| prob.h * e).collect();
        let durations = prob.durations();
        let dyn_blocks: Vec<DMatrix<f64>> = blocks.iter().map(|c| DMatrix::from_column_slice(2, 3, c.as_slice())).collect();
        let m = gram(&dyn_blocks, &durations);
        check_rank(&m)?;
        let m_inv = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("constraint Gram matrix".into()))?;
        Ok(Self { m_inv, blocks, sens: prob.h * prob.stm_total, y_nominal: prob.y_nominal })
    }

    /// (J, total ΔV) for one initial deviation and one target.
    fn sample(&self, dx0: &Vector6<f64>, target: &Vector2<f64>) -> (f64, f64) {
        let d = target - (self.y_nominal + self.sens * dx0);
        let lambda = self.m_inv * d;
        let j = d.dot(&lambda).max(0.0);
        let dv = self.blocks.iter().map(|c| (c.transpose() * lambda).norm()).sum();
        (j, dv)
    }
}

/// One Monte Carlo draw of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub energy: f64,
    pub total_delta_v: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloJ {
    pub cdf: EmpiricalCdf,
    pub samples: Vec<EnergySample>,
    pub total_time: f64,
    pub dropped: usize,
}

fn lower_cholesky6(p: &DMatrix<f64>) -> Result<Matrix6<f64>> {
    if p.iter().all(|v| *v == 0.0) {
        return Ok(Matrix6::zeros());
    }
    let l = robust_cholesky(p)?;
    Ok(Matrix6::from_iterator(l.iter().copied()))
}

fn lower_cholesky2(p: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if p.iter().all(|v| *v == 0.0) {
        return Ok(Matrix2::zeros());
    }
    p.cholesky().map(|c| c.l()).ok_or_else(|| Error::Covariance("target covariance".into()))
}

/// Energy distribution for initial states from N(0, `p0`) about the nominal
/// and targets from N(`target_mean`, `target_cov`), all on the shared linearization.
pub fn monte_carlo_j(prob: &ShootingProblem, p0: &DMatrix<f64>, target_mean: &Vector2<f64>, target_cov: &Matrix2<f64>, samples: usize, seed: u64) -> Result<MonteCarloJ> {
    let solver = FastSolver::new(prob)?;
    let l0 = lower_cholesky6(&p0.view((0, 0), (6, 6)).into_owned())?;
    let lt = lower_cholesky2(target_cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Vector6<f64>, Vector2<f64>)> = (0..samples)
        .map(|_| {
            let z0 = Vector6::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let zt = Vector2::from_fn(|_, _| StandardNormal.sample(&mut rng));
            (l0 * z0, target_mean + lt * zt)
        })
        .collect();
    let out: Vec<EnergySample> = draws
        .par_iter()
        .map(|(dx, y)| {
            let (energy, total_delta_v) = solver.sample(dx, y);
            EnergySample { energy, total_delta_v }
        })
        .collect();
    let good: Vec<EnergySample> = out.iter().copied().filter(|s| s.energy.is_finite()).collect();
    let dropped = out.len() - good.len();
    Ok(MonteCarloJ {
        cdf: EmpiricalCdf::new(good.iter().map(|s| s.energy).collect())?,
        samples: good,
        total_time: prob.total_time(),
        dropped,
    })
}

/// Manoeuvre-free reference distributions: pointwise mean of the replicate
/// ECDFs, and a lower band two standard deviations below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCurves {
    pub mean: GridCdf,
    pub band: GridCdf,
}

impl ReferenceCurves {
    pub fn mean_percentile(&self, d: f64) -> f64 {
        self.mean.percentile(d)
    }

    pub fn band_percentile(&self, d: f64) -> f64 {
        self.band.percentile(d)
    }
}

/// Replicates of the Monte Carlo energy for synthetic attributables drawn
/// from the projected manoeuvre-free measurement distribution.
pub fn baseline_reference(prob: &ShootingProblem, p0: &DMatrix<f64>, target_cov: &Matrix2<f64>, replicates: usize, samples: usize, grid_points: usize, seed: u64) -> Result<ReferenceCurves> {
    if replicates < 10 {
        return Err(Error::invalid("at least ten replicates required"));
    }
    let p6 = Matrix6::from_iterator(p0.view((0, 0), (6, 6)).iter().copied());
    let sens = prob.h * prob.stm_total;
    let spread = sens * p6 * sens.transpose() + target_cov;
    let ls = lower_cholesky2(&spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<(Vector2<f64>, u64)> = (0..replicates)
        .map(|_| {
            let z = Vector2::from_fn(|_, _| StandardNormal.sample(&mut rng));
            (prob.y_nominal + ls * z, rand::Rng::random(&mut rng))
        })
        .collect();
    let runs: Vec<EmpiricalCdf> = centres
        .par_iter()
        .map(|(c, s)| monte_carlo_j(prob, p0, c, target_cov, samples, *s).map(|m| m.cdf))
        .collect::<Result<_>>()?;
    let lo = runs.iter().map(|c| c.samples()[0]).fold(f64::INFINITY, f64::min).max(1e-300);
    let hi = runs.iter().map(|c| *c.samples().last().unwrap()).fold(0.0, f64::max).max(lo * (1.0 + 1e-9));
    let grid = log_grid(lo, hi, grid_points);
    let r = runs.len() as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut band = Vec::with_capacity(grid.len());
    for &j in &grid {
        let vals: Vec<f64> = runs.iter().map(|c| c.eval(j)).collect();
        let m = vals.iter().sum::<f64>() / r;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1.0);
        mean.push(m);
        band.push((m - 2.0 * var.sqrt()).clamp(0.0, 1.0));
    }
    Ok(ReferenceCurves { mean: GridCdf { grid: grid.clone(), values: mean }, band: GridCdf { grid, values: band } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PMetrics {
    pub p1m: f64,
    pub p5m: f64,
    pub p8m: f64,
    pub p1d: f64,
    pub p5d: f64,
    pub p8d: f64,
}

impl PMetrics {
    pub fn get(&self, m: PMetric) -> f64 {
        match m {
            PMetric::P1M => self.p1m,
            PMetric::P5M => self.p5m,
            PMetric::P8M => self.p8m,
            PMetric::P1D => self.p1d,
            PMetric::P5D => self.p5d,
            PMetric::P8D => self.p8d,
        }
    }
}

/// max{0, (d − F(J_d)) / d}.
pub fn scaled_probability(d: f64, cdf_at_reference: f64) -> f64 {
    ((d - cdf_at_reference) / d).max(0.0)
}

pub fn p_metrics(candidate: &EmpiricalCdf, reference: &ReferenceCurves) -> PMetrics {
    let m = |d: f64| scaled_probability(d, candidate.eval(reference.mean_percentile(d)));
    let b = |d: f64| scaled_probability(d, candidate.eval(reference.band_percentile(d)));
    PMetrics { p1m: m(0.1), p5m: m(0.5), p8m: m(0.8), p1d: b(0.1), p5d: b(0.5), p8d: b(0.8) }
}

#[derive(Debug, Clone)]
pub struct Alg2Outcome {
    pub attributable: Attributable,
    pub j_median: f64,
    pub metrics: PMetrics,
    pub manoeuvre: bool,
    pub dropped: usize,
    pub valid: bool,
    pub candidate: MonteCarloJ,
    pub reference: ReferenceCurves,
}

/// Full check of one segment: `est` at the segment start against the
/// attributable of the next track.
pub fn detect(est: &StateEstimate, att: &Attributable, station: &RadarStation, dynamics: &DynamicsConfig, prop: &Propagator, cfg: &Alg2Config, seed: u64) -> Result<Alg2Outcome> {
    let x0 = crate::ukf::orbit::inertial(&est.x, est.epoch);
    let prob = build_problem(&x0, att.t0, station, dynamics, prop, cfg.legs, cfg.accel_perturbation)?;
    let target = Vector2::new(att.range, att.range_rate);
    let target_cov = Matrix2::new(att.cov[(0, 0)], att.cov[(0, 3)], att.cov[(3, 0)], att.cov[(3, 3)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s1, s2): (u64, u64) = (rand::Rng::random(&mut rng), rand::Rng::random(&mut rng));
    let candidate = monte_carlo_j(&prob, &est.p, &target, &target_cov, cfg.samples, s1)?;
    let reference = baseline_reference(&prob, &est.p, &target_cov, cfg.replicates, cfg.samples, cfg.grid_points, s2)?;
    let metrics = p_metrics(&candidate.cdf, &reference);
    let valid = (candidate.dropped as f64) <= cfg.max_drop_fraction * cfg.samples as f64;
    Ok(Alg2Outcome {
        attributable: *att,
        j_median: candidate.cdf.median(),
        manoeuvre: metrics.get(cfg.decision_metric) >= cfg.threshold,
        metrics,
        dropped: candidate.dropped,
        valid,
        candidate,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_formula() {
        assert_eq!(scaled_probability(0.1, 0.0), 1.0);
        assert_eq!(scaled_probability(0.1, 0.1), 0.0);
        assert!((scaled_probability(0.1, 0.05) - 0.5).abs() < 1e-15);
        assert_eq!(scaled_probability(0.1, 0.7), 0.0);
    }

    #[test]
    fn double_integrator_single_leg() {
        // x(T) = ½uT² for constant u on one leg of length T.
        let t = 40.0;
        let d = 3.0;
        let c = DMatrix::from_row_slice(1, 1, &[0.5 * t * t]);
        let (dv, j) = min_energy(&[c], &[t], &DVector::from_vec(vec![d])).unwrap();
        assert!((dv[0][0] - 2.0 * d / t).abs() < 1e-15);
        assert!((j - 4.0 * d * d / t.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn double_integrator_two_legs_matches_lagrangian() {
        // Two legs of length τ: x(T) = u1(τ²/2 + τ²) + u2 τ²/2.
        let tau: f64 = 10.0;
        let d = 1.0;
        let a = 1.5 * tau * tau;
        let b = 0.5 * tau * tau;
        let blocks = [DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)];
        let (dv, j) = min_energy(&blocks, &[tau, tau], &DVector::from_vec(vec![d])).unwrap();
        // Stationarity of τ(u1² + u2²) + λ(d − a u1 − b u2): u_i ∝ coefficient.
        let lam = d / ((a * a + b * b) / tau);
        assert!((dv[0][0] - a * lam).abs() < 1e-14);
        assert!((dv[1][0] - b * lam).abs() < 1e-14);
        assert!((j - d * lam).abs() < 1e-16);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let blocks = [DMatrix::from_row_slice(2, 1, &[1.0, 2.0])];
        let r = min_energy(&blocks, &[1.0], &DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }
}
