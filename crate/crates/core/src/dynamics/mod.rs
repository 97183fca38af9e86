//! Orbit propagation under two-body + J2 + exponential drag, with piecewise
//! constant LVLH thrust, plus finite-difference state transition matrices.

mod elements;
mod frames;
mod integrator;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use elements::KeplerianElements;
pub use frames::{earth_rotation_angle, ecef_to_inertial, enu_basis, geodetic_to_ecef, lvlh_basis};
pub(crate) use frames::lvlh_from_rv;
pub use integrator::IntegratorConfig;

/// Epoch (s since scenario reference) with inertial position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialState {
    pub epoch: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl InertialState {
    pub fn new(epoch: f64, r: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { epoch, r, v }
    }

    pub fn from_vector(epoch: f64, y: &Vector6<f64>) -> Self {
        Self { epoch, r: y.fixed_rows::<3>(0).into(), v: y.fixed_rows::<3>(3).into() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z)
    }

    pub fn specific_energy(&self, mu: f64) -> f64 {
        self.v.norm_squared() / 2.0 - mu / self.r.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.epoch.is_finite() && self.r.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpacecraftParams {
    pub mass: f64,
    pub drag_coefficient: f64,
    /// Drag cross-section, m².
    pub drag_area: f64,
    /// Kept for completeness; radiation pressure is not modelled.
    pub srp_area: f64,
}

impl Default for SpacecraftParams {
    fn default() -> Self {
        Self { mass: 2000.0, drag_coefficient: 2.2, drag_area: 10.0, srp_area: 10.0 }
    }
}

impl SpacecraftParams {
    /// Ballistic coefficient C_D·S/m, m²/kg.
    pub fn ballistic_coefficient(&self) -> f64 {
        self.drag_coefficient * self.drag_area / self.mass
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.drag_coefficient > 0.0 && self.drag_area >= 0.0) {
            return Err(Error::invalid("spacecraft parameters need mass > 0, C_D > 0, S >= 0"));
        }
        Ok(())
    }
}

/// Constant LVLH acceleration over `[start_epoch, start_epoch + duration)`.
///
/// Components follow [`lvlh_basis`]: radial, along-track, orbit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManoeuvreSpec {
    pub start_epoch: f64,
    pub duration: f64,
    pub accel_lvlh: Vector3<f64>,
}

impl ManoeuvreSpec {
    pub fn end_epoch(&self) -> f64 {
        self.start_epoch + self.duration
    }

    pub fn delta_v(&self) -> f64 {
        self.accel_lvlh.norm() * self.duration
    }

    fn is_effective(&self) -> bool {
        self.duration > 0.0 && self.accel_lvlh != Vector3::zeros()
    }

    /// Whether the burn overlaps the half-open interval `(a, b]`.
    pub fn intersects(&self, a: f64, b: f64) -> bool {
        self.duration > 0.0 && self.start_epoch <= b && self.end_epoch() > a
    }
}

/// Φ(t1, t0): maps state deviations at `t0` to `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTransition {
    pub t0: f64,
    pub t1: f64,
    pub phi: Matrix6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExponentialAtmosphere {
    /// Reference density, kg/m³.
    pub rho0: f64,
    /// Reference altitude, m.
    pub h0: f64,
    pub scale_height: f64,
}

impl Default for ExponentialAtmosphere {
    fn default() -> Self {
        Self { rho0: 2.0e-13, h0: 700e3, scale_height: 75e3 }
    }
}

impl ExponentialAtmosphere {
    pub fn density(&self, altitude: f64) -> f64 {
        self.rho0 * (-(altitude - self.h0) / self.scale_height).exp()
    }
}

/// Central-difference step sizes for Jacobians of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StmPerturbation {
    pub position: f64,
    pub velocity: f64,
}

impl Default for StmPerturbation {
    fn default() -> Self {
        Self { position: 1.0, velocity: 1e-3 }
    }
}

/// Physical constants and force-model switches (WGS-84 defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub mu: f64,
    pub earth_radius: f64,
    pub flattening: f64,
    pub j2: f64,
    pub earth_rotation_rate: f64,
    /// Earth rotation angle at scenario time zero, rad.
    pub gmst_at_reference: f64,
    pub enable_j2: bool,
    pub enable_drag: bool,
    pub atmosphere: ExponentialAtmosphere,
    /// Propagation aborts with a re-entry error below this altitude, m.
    pub min_altitude: f64,
    pub integrator: IntegratorConfig,
    pub stm_perturbation: StmPerturbation,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            mu: 3.986_004_418e14,
            earth_radius: 6_378_137.0,
            flattening: 1.0 / 298.257_223_563,
            j2: 1.082_629_989_05e-3,
            earth_rotation_rate: 7.292_115e-5,
            gmst_at_reference: 0.0,
            enable_j2: true,
            enable_drag: true,
            atmosphere: ExponentialAtmosphere::default(),
            min_altitude: 100e3,
            integrator: IntegratorConfig::default(),
            stm_perturbation: StmPerturbation::default(),
        }
    }
}

impl DynamicsConfig {
    pub fn two_body() -> Self {
        Self { enable_j2: false, enable_drag: false, ..Self::default() }
    }
}

/// Force model evaluated by the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceModel {
    pub mu: f64,
    pub earth_radius: f64,
    pub j2: f64,
    pub earth_rotation_rate: f64,
    pub atmosphere: Option<ExponentialAtmosphere>,
    /// C_D·S/m, m²/kg.
    pub ballistic: f64,
}

impl ForceModel {
    pub fn new(cfg: &DynamicsConfig, params: &SpacecraftParams) -> Self {
        Self {
            mu: cfg.mu,
            earth_radius: cfg.earth_radius,
            j2: if cfg.enable_j2 { cfg.j2 } else { 0.0 },
            earth_rotation_rate: cfg.earth_rotation_rate,
            atmosphere: cfg.enable_drag.then_some(cfg.atmosphere),
            ballistic: params.ballistic_coefficient(),
        }
    }

    pub fn acceleration(&self, r: &Vector3<f64>, v: &Vector3<f64>, thrust_lvlh: Option<&Vector3<f64>>) -> Vector3<f64> {
        let r2 = r.norm_squared();
        let rn = r2.sqrt();
        let mut a = r * (-self.mu / (r2 * rn));

        if self.j2 != 0.0 {
            let z2 = r.z * r.z / r2;
            let k = -1.5 * self.j2 * self.mu * self.earth_radius * self.earth_radius / (r2 * r2 * rn);
            a += Vector3::new(k * r.x * (1.0 - 5.0 * z2), k * r.y * (1.0 - 5.0 * z2), k * r.z * (3.0 - 5.0 * z2));
        }

        if let Some(atm) = &self.atmosphere {
            if self.ballistic > 0.0 {
                let w = self.earth_rotation_rate;
                let v_rel = Vector3::new(v.x + w * r.y, v.y - w * r.x, v.z);
                let rho = atm.density(rn - self.earth_radius);
                a -= v_rel * (0.5 * rho * self.ballistic * v_rel.norm());
            }
        }

        if let Some(u) = thrust_lvlh {
            if let Some(rot) = lvlh_from_rv(r, v) {
                a += rot * u;
            } else {
                a += Vector3::repeat(f64::NAN);
            }
        }
        a
    }

    fn rhs<'a>(&'a self, thrust: Option<&'a Vector3<f64>>) -> impl Fn(f64, &Vector6<f64>) -> Vector6<f64> + 'a {
        move |_t, y| {
            let r = y.fixed_rows::<3>(0).into_owned();
            let v = y.fixed_rows::<3>(3).into_owned();
            let a = self.acceleration(&r, &v, thrust);
            Vector6::new(v.x, v.y, v.z, a.x, a.y, a.z)
        }
    }
}

/// Accepted step sizes of an adaptive run, one list per thrust segment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepRecord {
    segments: Vec<Vec<f64>>,
}

struct Segment {
    t0: f64,
    t1: f64,
    thrust: Option<Vector3<f64>>,
}

fn thrust_segments(t0: f64, tf: f64, manoeuvres: &[ManoeuvreSpec]) -> Vec<Segment> {
    let active: Vec<&ManoeuvreSpec> = manoeuvres.iter().filter(|m| m.is_effective()).collect();
    let (lo, hi) = if tf >= t0 { (t0, tf) } else { (tf, t0) };
    let mut cuts: Vec<f64> = active
        .iter()
        .flat_map(|m| [m.start_epoch, m.end_epoch()])
        .filter(|&t| t > lo && t < hi)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    if tf < t0 {
        cuts.reverse();
    }
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(t0);
    bounds.extend(cuts);
    bounds.push(tf);
    bounds
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let mut sum = Vector3::zeros();
            let mut any = false;
            for m in &active {
                if m.start_epoch <= mid && mid < m.end_epoch() {
                    sum += m.accel_lvlh;
                    any = true;
                }
            }
            Segment { t0: w[0], t1: w[1], thrust: any.then_some(sum) }
        })
        .collect()
}

/// Numerical propagator bound to one force model and integrator setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    pub force: ForceModel,
    pub integrator: IntegratorConfig,
    pub min_altitude: f64,
    pub stm_perturbation: StmPerturbation,
}

impl Propagator {
    pub fn new(cfg: &DynamicsConfig, params: &SpacecraftParams) -> Self {
        Self {
            force: ForceModel::new(cfg, params),
            integrator: cfg.integrator,
            min_altitude: cfg.min_altitude,
            stm_perturbation: cfg.stm_perturbation,
        }
    }

    /// Same model with a different ballistic coefficient.
    pub fn with_ballistic(&self, ballistic: f64) -> Self {
        let mut p = *self;
        p.force.ballistic = ballistic;
        p
    }

    fn check(&self) -> impl Fn(f64, &Vector6<f64>) -> Result<()> + '_ {
        move |t, y| {
            if !y.iter().all(|c| c.is_finite()) {
                return Err(Error::Divergence { epoch: t });
            }
            let alt = y.fixed_rows::<3>(0).norm() - self.force.earth_radius;
            if alt < self.min_altitude {
                return Err(Error::Reentry { epoch: t, altitude_m: alt });
            }
            Ok(())
        }
    }

    fn run(&self, x0: &InertialState, tf: f64, manoeuvres: &[ManoeuvreSpec], mut record: Option<&mut StepRecord>) -> Result<InertialState> {
        if !x0.is_finite() || !tf.is_finite() {
            return Err(Error::Divergence { epoch: x0.epoch });
        }
        if tf == x0.epoch {
            return Ok(*x0);
        }
        (self.check())(x0.epoch, &x0.to_vector())?;
        let mut y = x0.to_vector();
        let mut h = self.integrator.initial_step;
        for seg in thrust_segments(x0.epoch, tf, manoeuvres) {
            let f = self.force.rhs(seg.thrust.as_ref());
            let rec = record.as_deref_mut().map(|r| {
                r.segments.push(Vec::new());
                r.segments.last_mut().unwrap()
            });
            let (y1, h1) = integrator::integrate(&f, seg.t0, y, seg.t1, h, &self.integrator, rec, self.check())?;
            y = y1;
            h = h1;
        }
        Ok(InertialState::from_vector(tf, &y))
    }

    pub fn propagate(&self, x0: &InertialState, tf: f64, manoeuvres: &[ManoeuvreSpec]) -> Result<InertialState> {
        self.run(x0, tf, manoeuvres, None)
    }

    /// Adaptive propagation that also returns the accepted step sequence.
    pub fn propagate_recorded(&self, x0: &InertialState, tf: f64, manoeuvres: &[ManoeuvreSpec]) -> Result<(InertialState, StepRecord)> {
        let mut rec = StepRecord::default();
        let x = self.run(x0, tf, manoeuvres, Some(&mut rec))?;
        Ok((x, rec))
    }

    /// Propagation through a previously recorded step sequence. The thrust
    /// segmentation of `manoeuvres` over `[x0.epoch, tf]` must match the recording.
    pub fn propagate_replay(&self, x0: &InertialState, tf: f64, manoeuvres: &[ManoeuvreSpec], steps: &StepRecord) -> Result<InertialState> {
        if tf == x0.epoch {
            return Ok(*x0);
        }
        let segs = thrust_segments(x0.epoch, tf, manoeuvres);
        if segs.len() != steps.segments.len() {
            return Err(Error::invalid("step record does not match thrust segmentation"));
        }
        let mut y = x0.to_vector();
        for (seg, hs) in segs.iter().zip(&steps.segments) {
            let f = self.force.rhs(seg.thrust.as_ref());
            y = integrator::integrate_fixed(&f, seg.t0, y, seg.t1, hs, self.check())?;
        }
        Ok(InertialState::from_vector(tf, &y))
    }

    /// Propagates to each epoch in turn (monotone in one direction), carrying the
    /// integrator step between outputs.
    pub fn propagate_to_epochs(&self, x0: &InertialState, epochs: &[f64], manoeuvres: &[ManoeuvreSpec]) -> Result<Vec<InertialState>> {
        let mut out = Vec::with_capacity(epochs.len());
        let mut cur = *x0;
        for &t in epochs {
            cur = self.propagate(&cur, t, manoeuvres)?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Central finite-difference state transition matrix of the ballistic flow.
    pub fn stm(&self, x0: &InertialState, tf: f64) -> Result<StateTransition> {
        if tf == x0.epoch {
            return Ok(StateTransition { t0: x0.epoch, t1: tf, phi: Matrix6::identity() });
        }
        let (_, rec) = self.propagate_recorded(x0, tf, &[])?;
        let y0 = x0.to_vector();
        let mut phi = Matrix6::zeros();
        for j in 0..6 {
            let d = if j < 3 { self.stm_perturbation.position } else { self.stm_perturbation.velocity };
            let mut yp = y0;
            yp[j] += d;
            let mut ym = y0;
            ym[j] -= d;
            let xp = self.propagate_replay(&InertialState::from_vector(x0.epoch, &yp), tf, &[], &rec)?;
            let xm = self.propagate_replay(&InertialState::from_vector(x0.epoch, &ym), tf, &[], &rec)?;
            phi.set_column(j, &((xp.to_vector() - xm.to_vector()) / (2.0 * d)));
        }
        Ok(StateTransition { t0: x0.epoch, t1: tf, phi })
    }
}

/// Convenience wrapper: build a propagator from config and parameters and run it.
pub fn propagate(
    x0: &InertialState,
    params: &SpacecraftParams,
    tf: f64,
    manoeuvres: &[ManoeuvreSpec],
    cfg: &DynamicsConfig,
) -> Result<InertialState> {
    Propagator::new(cfg, params).propagate(x0, tf, manoeuvres)
}

pub fn stm(x0: &InertialState, params: &SpacecraftParams, tf: f64, cfg: &DynamicsConfig) -> Result<StateTransition> {
    Propagator::new(cfg, params).stm(x0, tf)
}

/// Dense reference trajectory: states stored on a regular grid, intermediate
/// epochs obtained by propagating from the preceding node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    propagator: Propagator,
    manoeuvres: Vec<ManoeuvreSpec>,
    nodes: Vec<InertialState>,
    spacing: f64,
}

impl Trajectory {
    pub fn generate(propagator: Propagator, x0: InertialState, t_end: f64, manoeuvres: Vec<ManoeuvreSpec>, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || t_end < x0.epoch {
            return Err(Error::invalid("trajectory needs positive spacing and t_end >= start"));
        }
        let n = ((t_end - x0.epoch) / spacing).ceil() as usize;
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(x0);
        for k in 1..=n {
            let t = (x0.epoch + k as f64 * spacing).min(t_end);
            let next = propagator.propagate(nodes.last().unwrap(), t, &manoeuvres)?;
            nodes.push(next);
        }
        Ok(Self { propagator, manoeuvres, nodes, spacing })
    }

    pub fn start(&self) -> f64 {
        self.nodes[0].epoch
    }

    pub fn end(&self) -> f64 {
        self.nodes.last().unwrap().epoch
    }

    /// Stored grid states, manoeuvres applied.
    pub fn nodes(&self) -> &[InertialState] {
        &self.nodes
    }

    pub fn manoeuvres(&self) -> &[ManoeuvreSpec] {
        &self.manoeuvres
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn state_at(&self, t: f64) -> Result<InertialState> {
        if t < self.start() || t > self.end() {
            return Err(Error::invalid(format!("epoch {t} outside trajectory span")));
        }
        let idx = (((t - self.start()) / self.spacing).floor() as usize).min(self.nodes.len() - 1);
        let node = &self.nodes[idx];
        self.propagator.propagate(node, t, &self.manoeuvres)
    }
}

/// Rotation of a 6×6 covariance given in LVLH axes into the inertial frame.
pub fn lvlh_covariance_to_inertial(x: &InertialState, cov_lvlh: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let r: Matrix3<f64> = lvlh_basis(x)?;
    let mut t = Matrix6::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    Ok(t * cov_lvlh * t.transpose())
}

/// Inverse of [`lvlh_covariance_to_inertial`].
pub fn inertial_covariance_to_lvlh(x: &InertialState, cov: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let r: Matrix3<f64> = lvlh_basis(x)?;
    let mut t = Matrix6::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r.transpose());
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&r.transpose());
    Ok(t * cov * t.transpose())
}
