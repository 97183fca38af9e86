//! Scenario specs, the simulated manoeuvre grid, and truth/track generation.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsConfig, KeplerianElements, ManoeuvreSpec, Propagator, SpacecraftParams, Trajectory};
use crate::error::{Error, Result};
use crate::radar::{find_passes, plot_epochs, synthesize_track, RadarStation, RadarTrack};

pub const SCHEMA_VERSION: u32 = 1;

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Low,
    Medium,
    High,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Low, Intensity::Medium, Intensity::High];

    /// Burn length at the grid acceleration, s.
    pub fn burn_duration(self) -> f64 {
        match self {
            Intensity::Low => 5.0,
            Intensity::Medium => 30.0,
            Intensity::High => 120.0,
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Intensity::Low => "low",
            Intensity::Medium => "medium",
            Intensity::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "T")]
    Tangential,
    #[serde(rename = "OOP")]
    OutOfPlane,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Tangential, Direction::OutOfPlane, Direction::Hybrid];

    /// Unit thrust direction in (radial, along-track, cross-track).
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Direction::Tangential => Vector3::new(0.0, 1.0, 0.0),
            Direction::OutOfPlane => Vector3::new(0.0, 0.0, 1.0),
            Direction::Hybrid => Vector3::new(0.0, 1.0, 1.0) / 2f64.sqrt(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Tangential => "T",
            Direction::OutOfPlane => "OOP",
            Direction::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridTags {
    pub intensity: Intensity,
    pub offset_hours: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub id: String,
    pub elements: KeplerianElements,
    pub truth_params: SpacecraftParams,
    pub model_params: SpacecraftParams,
    pub station: RadarStation,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub manoeuvres: Vec<ManoeuvreSpec>,
    pub seed: u64,
    /// Passes with fewer plots are not turned into tracks.
    #[serde(default = "default_min_plots")]
    pub min_plots: usize,
    #[serde(default)]
    pub tags: Option<GridTags>,
    #[serde(default)]
    pub repetition: u32,
}

fn default_min_plots() -> usize {
    5
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported scenario schema_version {}", self.schema_version)));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::invalid("scenario t_end must follow t_start"));
        }
        if self.min_plots < 2 {
            return Err(Error::invalid("min_plots must be at least 2"));
        }
        self.truth_params.validate()?;
        self.model_params.validate()?;
        self.station.validate()
    }

    pub fn total_delta_v(&self) -> f64 {
        self.manoeuvres.iter().fold(0.0, |acc, m| acc + m.delta_v())
    }
}

/// Interval between one track and the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    /// Index of the track that opens the segment.
    pub from_track: usize,
    /// Index of the track that closes it.
    pub to_track: usize,
    /// Last plot of the opening track.
    pub start_epoch: f64,
    /// Mid-epoch of the closing track.
    pub end_epoch: f64,
    pub truth_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetadata {
    pub id: String,
    pub tags: Option<GridTags>,
    pub repetition: u32,
    pub delta_v: f64,
    pub n_passes: usize,
    pub n_tracks: usize,
    pub n_segments: usize,
    pub n_positive: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub truth: Trajectory,
    pub tracks: Vec<RadarTrack>,
    pub segments: Vec<Segment>,
}

impl Scenario {
    pub fn metadata(&self, n_passes: usize) -> ScenarioMetadata {
        ScenarioMetadata {
            id: self.spec.id.clone(),
            tags: self.spec.tags,
            repetition: self.spec.repetition,
            delta_v: self.spec.total_delta_v(),
            n_passes,
            n_tracks: self.tracks.len(),
            n_segments: self.segments.len(),
            n_positive: self.segments.iter().filter(|s| s.truth_label).count(),
        }
    }

    pub fn model_propagator(&self, dynamics: &DynamicsConfig) -> Propagator {
        Propagator::new(dynamics, &self.spec.model_params)
    }
}

/// Node spacing of stored truth trajectories, s.
pub const TRUTH_SPACING: f64 = 60.0;

pub fn truth_trajectory(spec: &ScenarioSpec, dynamics: &DynamicsConfig) -> Result<Trajectory> {
    let x0 = spec.elements.to_state(spec.t_start, dynamics.mu)?;
    let prop = Propagator::new(dynamics, &spec.truth_params);
    Trajectory::generate(prop, x0, spec.t_end, spec.manoeuvres.clone(), TRUTH_SPACING)
}

/// Segments between consecutive tracks with their truth labels.
pub fn delimit_segments(tracks: &[RadarTrack], manoeuvres: &[ManoeuvreSpec]) -> Vec<Segment> {
    tracks
        .windows(2)
        .enumerate()
        .map(|(id, w)| {
            let (a, b) = (w[0].last_epoch(), w[1].mid_epoch());
            Segment {
                id,
                from_track: id,
                to_track: id + 1,
                start_epoch: a,
                end_epoch: b,
                truth_label: manoeuvres.iter().any(|m| m.intersects(a, b)),
            }
        })
        .collect()
}

/// Truth, tracks at every usable pass, and segments.
pub fn generate_scenario(spec: &ScenarioSpec, dynamics: &DynamicsConfig) -> Result<(Scenario, ScenarioMetadata)> {
    spec.validate()?;
    let truth = truth_trajectory(spec, dynamics)?;
    let passes = find_passes(|t| truth.state_at(t), &spec.station, dynamics, spec.t_start, spec.t_end)?;
    if passes.is_empty() {
        return Err(Error::NoPasses);
    }
    let mut tracks = Vec::new();
    for (i, pass) in passes.iter().enumerate() {
        if plot_epochs(pass, spec.station.plot_cadence).len() < spec.min_plots {
            continue;
        }
        tracks.push(synthesize_track(&truth, &spec.station, pass, mix_seed(spec.seed, i as u64), dynamics)?);
    }
    let segments = delimit_segments(&tracks, &spec.manoeuvres);
    let scenario = Scenario { spec: spec.clone(), truth, tracks, segments };
    let meta = scenario.metadata(passes.len());
    Ok((scenario, meta))
}
