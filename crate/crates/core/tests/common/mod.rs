#![allow(dead_code)]

pub mod linear;

use mandet::attributable::{self, Attributable};
use mandet::harness::*;
use mandet::ukf::StateEstimate;
use mandet::Config;

/// Tangential grid restricted to the given intensities and offsets.
pub fn tangential_grid(cfg: &Config, intensities: &[Intensity], offsets: &[f64], reps: u32) -> GridSpecs {
    let mut h = cfg.harness.clone();
    h.intensities = intensities.to_vec();
    h.offsets_hours = offsets.to_vec();
    h.directions = vec![Direction::Tangential];
    h.repetitions = reps;
    grid_specs(&h, &cfg.dynamics, cfg.seed).unwrap()
}

/// Segment closing on the first track that starts after `epoch`.
pub fn segment_before(sc: &Scenario, epoch: f64) -> Segment {
    *sc.segments.iter().find(|s| sc.tracks[s.to_track].first_epoch() >= epoch - 600.0).unwrap()
}

/// Reachability-detector start of `seg`, drawn the way the campaign does.
pub fn segment_start(sc: &Scenario, seg: &Segment, cfg: &Config) -> StateEstimate {
    let x = sc.truth.state_at(seg.start_epoch).unwrap();
    let salt = ((seg.id as u64) << 8) | 1;
    initial_estimate(&x, &cfg.harness.detector_covariance_lvlh(), cfg.harness.perturb_initial_mean, mix_seed(sc.spec.seed, salt)).unwrap()
}

pub fn closing_attributable(sc: &Scenario, seg: &Segment, cfg: &Config) -> Attributable {
    attributable::compute(&sc.tracks[seg.to_track], &cfg.attributable).unwrap()
}

pub fn scenario(spec: &ScenarioSpec, cfg: &Config) -> Scenario {
    generate_scenario(spec, &cfg.dynamics).unwrap().0
}
