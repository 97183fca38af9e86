//! Particle-based reachability check: sample the initial Gaussian, propagate
//! every sample to the attributable epoch, and compare the projected cloud with
//! the attributable by Mahalanobis distance.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Matrix4, Matrix6, Vector4, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributable::Attributable;
use crate::dynamics::{DynamicsConfig, InertialState, Propagator};
use crate::error::{Error, Result};
use crate::radar::{observe, RadarStation};
use crate::statkit::{mahalanobis, pr_md, ChiSquareArgument, Gaussian};
use crate::ukf::{robust_cholesky, StateEstimate};

/// Attributable components compared by the detectors, in (range, elevation,
/// azimuth, range rate) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSubset {
    #[default]
    RangeRangeRate,
    All,
}

impl ObservableSubset {
    pub fn indices(&self) -> &'static [usize] {
        match self {
            ObservableSubset::RangeRangeRate => &[0, 3],
            ObservableSubset::All => &[0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alg1Config {
    pub particles: usize,
    pub subset: ObservableSubset,
    /// Segment is flagged invalid when more than this fraction of particles is lost.
    pub max_drop_fraction: f64,
    pub threshold: f64,
    pub chi_square_argument: ChiSquareArgument,
}

impl Default for Alg1Config {
    fn default() -> Self {
        Self {
            particles: 1000,
            subset: ObservableSubset::RangeRangeRate,
            max_drop_fraction: 0.01,
            threshold: 0.5,
            chi_square_argument: ChiSquareArgument::Distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub epoch: f64,
    pub particles: Vec<Vector6<f64>>,
    /// Particles lost to re-entry or divergence so far.
    pub dropped: usize,
}

/// `m` draws from N(x̂, P̂) (first six state components), deterministic in `seed`.
pub fn sample_initial(est: &StateEstimate, m: usize, seed: u64) -> Result<ParticleCloud> {
    if est.dim() < 6 {
        return Err(Error::invalid("particle sampling needs a six-component state"));
    }
    let p6 = est.p.view((0, 0), (6, 6)).into_owned();
    let l = robust_cholesky(&p6)?;
    let l = Matrix6::from_iterator(l.iter().copied());
    let mean = Vector6::from_iterator(est.x.iter().take(6).copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..m)
        .map(|_| {
            let z = Vector6::from_fn(|_, _| StandardNormal.sample(&mut rng));
            mean + l * z
        })
        .collect();
    Ok(ParticleCloud { epoch: est.epoch, particles, dropped: 0 })
}

/// Propagates every particle to `t`. Re-entered or diverged particles are
/// removed and counted; order of the survivors is preserved.
pub fn propagate_cloud(cloud: &ParticleCloud, prop: &Propagator, t: f64) -> Result<ParticleCloud> {
    let results: Vec<Result<Vector6<f64>>> = cloud
        .particles
        .par_iter()
        .map(|p| prop.propagate(&InertialState::from_vector(cloud.epoch, p), t, &[]).map(|x| x.to_vector()))
        .collect();
    let mut particles = Vec::with_capacity(results.len());
    let mut dropped = cloud.dropped;
    for r in results {
        match r {
            Ok(p) => particles.push(p),
            Err(Error::Reentry { .. } | Error::Divergence { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ParticleCloud { epoch: t, particles, dropped })
}

/// Mean and unbiased covariance of the cloud in attributable space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedMeasurement {
    /// (range, elevation, azimuth, range rate).
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

pub fn project_cloud(cloud: &ParticleCloud, station: &RadarStation, dynamics: &DynamicsConfig) -> Result<ProjectedMeasurement> {
    if cloud.particles.is_empty() {
        return Err(Error::invalid("empty particle cloud"));
    }
    let mut obs: Vec<Vector4<f64>> = cloud
        .particles
        .iter()
        .map(|p| {
            let o = observe(&InertialState::from_vector(cloud.epoch, p), station, dynamics);
            Vector4::new(o.range, o.elevation, o.azimuth, o.range_rate)
        })
        .collect();
    // A canonical order makes the sums independent of particle order.
    obs.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let az_ref = obs[0][2];
    for o in &mut obs {
        o[2] = az_ref + wrap_pi(o[2] - az_ref);
    }
    let n = obs.len() as f64;
    let mut mean = Vector4::zeros();
    for o in &obs {
        mean += o;
    }
    mean /= n;
    let mut cov = Matrix4::zeros();
    for o in &obs {
        let d = o - mean;
        cov += d * d.transpose();
    }
    if obs.len() > 1 {
        cov /= n - 1.0;
    }
    mean[2] = mean[2].rem_euclid(TAU);
    Ok(ProjectedMeasurement { mean, cov })
}

/// Mahalanobis distance between an attributable and a projected cloud over `subset`.
pub fn attributable_distance(a: &Attributable, proj: &ProjectedMeasurement, subset: ObservableSubset) -> Result<f64> {
    let idx = subset.indices();
    let mut delta = a.vector() - proj.mean;
    delta[2] = wrap_pi(delta[2]);
    let sum = a.cov + proj.cov;
    let d = DVector::from_iterator(idx.len(), idx.iter().map(|&i| delta[i]));
    let c = DMatrix::from_fn(idx.len(), idx.len(), |i, j| sum[(idx[i], idx[j])]);
    mahalanobis(&d, &Gaussian::new(DVector::zeros(idx.len()), c)?)
}

#[derive(Debug, Clone)]
pub struct Alg1Outcome {
    pub attributable: Attributable,
    pub projected: ProjectedMeasurement,
    pub md: f64,
    pub probability: f64,
    pub manoeuvre: bool,
    pub dropped: usize,
    /// False when too many particles were lost.
    pub valid: bool,
}

/// Full check of one segment: `est` at the segment start against the
/// attributable of the next track.
pub fn detect(est: &StateEstimate, att: &Attributable, station: &RadarStation, dynamics: &DynamicsConfig, prop: &Propagator, cfg: &Alg1Config, seed: u64) -> Result<Alg1Outcome> {
    if !(att.t0 > est.epoch) {
        return Err(Error::invalid("attributable epoch must follow the initial estimate"));
    }
    let cloud = sample_initial(est, cfg.particles, seed)?;
    let moved = propagate_cloud(&cloud, prop, att.t0)?;
    let proj = project_cloud(&moved, station, dynamics)?;
    let md = attributable_distance(att, &proj, cfg.subset)?;
    let probability = pr_md(md, cfg.subset.indices().len(), cfg.chi_square_argument);
    let valid = (moved.dropped as f64) <= cfg.max_drop_fraction * cfg.particles as f64;
    Ok(Alg1Outcome {
        attributable: *att,
        projected: proj,
        md,
        probability,
        manoeuvre: probability >= cfg.threshold,
        dropped: moved.dropped,
        valid,
    })
}
