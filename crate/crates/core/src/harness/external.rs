//! Externally supplied tracks, reference ephemerides and state files.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{delimit_segments, initial_estimate, run_segments, SegmentInputs, SegmentRow};
use crate::config::Config;
use crate::dynamics::{InertialState, ManoeuvreSpec, SpacecraftParams};
use crate::epoch::{from_iso, to_iso};
use crate::error::{Error, Result};
use crate::harness::Detector;
use crate::radar::{read_track_csv, RadarStation, RadarTrack};
use crate::ukf::StateEstimate;

/// Interchange form of a 6-state estimate (inertial, m and m/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub epoch_iso: String,
    pub r_m: [f64; 3],
    pub v_mps: [f64; 3],
    pub cov_rowmajor_6x6: Vec<f64>,
}

impl From<&StateEstimate> for StateRecord {
    fn from(e: &StateEstimate) -> Self {
        let p = e.p.view((0, 0), (6, 6)).transpose();
        Self {
            epoch_iso: to_iso(e.epoch),
            r_m: [e.x[0], e.x[1], e.x[2]],
            v_mps: [e.x[3], e.x[4], e.x[5]],
            cov_rowmajor_6x6: p.iter().copied().collect(),
        }
    }
}

impl TryFrom<&StateRecord> for StateEstimate {
    type Error = Error;

    fn try_from(r: &StateRecord) -> Result<Self> {
        if r.cov_rowmajor_6x6.len() != 36 {
            return Err(Error::invalid("state covariance needs 36 entries"));
        }
        let x = DVector::from_iterator(6, r.r_m.iter().chain(&r.v_mps).copied());
        Ok(StateEstimate::new(from_iso(&r.epoch_iso)?, x, DMatrix::from_row_slice(6, 6, &r.cov_rowmajor_6x6)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EphemerisRow {
    epoch_iso: String,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    vx_mps: f64,
    vy_mps: f64,
    vz_mps: f64,
}

/// Reads an ephemeris CSV (`epoch_iso, x_m, y_m, z_m, vx_mps, vy_mps, vz_mps`),
/// inertial frame. Epochs must be strictly increasing.
pub fn read_ephemeris_csv(path: &Path) -> Result<Vec<InertialState>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out: Vec<InertialState> = Vec::new();
    for row in r.deserialize() {
        let row: EphemerisRow = row?;
        let t = from_iso(&row.epoch_iso)?;
        if out.last().is_some_and(|p| p.epoch >= t) {
            return Err(Error::invalid(format!("ephemeris epochs not increasing at {}", row.epoch_iso)));
        }
        out.push(InertialState::new(t, Vector3::new(row.x_m, row.y_m, row.z_m), Vector3::new(row.vx_mps, row.vy_mps, row.vz_mps)));
    }
    Ok(out)
}

pub fn write_ephemeris_csv(states: &[InertialState], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in states {
        w.serialize(EphemerisRow { epoch_iso: to_iso(s.epoch), x_m: s.r.x, y_m: s.r.y, z_m: s.r.z, vx_mps: s.v.x, vy_mps: s.v.y, vz_mps: s.v.z })?;
    }
    w.flush()?;
    Ok(())
}

/// First ephemeris point at or after `t`.
pub fn first_at_or_after(ephemeris: &[InertialState], t: f64) -> Option<&InertialState> {
    ephemeris.get(ephemeris.partition_point(|s| s.epoch < t))
}

/// Last ephemeris point at or before `t`.
pub fn last_at_or_before(ephemeris: &[InertialState], t: f64) -> Option<&InertialState> {
    ephemeris.partition_point(|s| s.epoch <= t).checked_sub(1).map(|k| &ephemeris[k])
}

/// Every `*.csv` in `dir` as a track, sorted by first epoch.
pub fn read_track_dir(dir: &Path, station: &str) -> Result<Vec<RadarTrack>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    paths.sort();
    let mut tracks = paths.iter().map(|p| read_track_csv(p, station)).collect::<Result<Vec<_>>>()?;
    tracks.sort_by(|a, b| a.first_epoch().total_cmp(&b.first_epoch()));
    if tracks.windows(2).any(|w| w[1].first_epoch() <= w[0].last_epoch()) {
        return Err(Error::invalid("tracks overlap in time"));
    }
    Ok(tracks)
}

/// Detector run on external tracks. Each reachability segment starts from the
/// first ephemeris point after the opening track, with the harness detector
/// covariance; the filters start from the last point before the first track
/// with the harness filter covariance. `manoeuvres` provides truth labels when
/// known.
pub fn run_external(
    id: &str,
    tracks: &[RadarTrack],
    ephemeris: &[InertialState],
    manoeuvres: &[ManoeuvreSpec],
    station: &RadarStation,
    params: &SpacecraftParams,
    detectors: &[Detector],
    cfg: &Config,
) -> Result<Vec<SegmentRow>> {
    if tracks.len() < 2 {
        return Err(Error::invalid("at least two tracks required"));
    }
    let segments = delimit_segments(tracks, manoeuvres);
    let inputs = SegmentInputs {
        scenario_id: id,
        tags: None,
        repetition: 0,
        seed: cfg.seed,
        station,
        model_params: *params,
        tracks,
        segments: &segments,
    };
    let p0 = cfg.harness.detector_covariance_lvlh();
    let segment_start = |seg: &super::Segment| {
        let x = first_at_or_after(ephemeris, seg.start_epoch)
            .filter(|x| x.epoch < tracks[seg.to_track].first_epoch())
            .ok_or_else(|| Error::invalid("no ephemeris point between the tracks"))?;
        initial_estimate(x, &p0, false, 0)
    };
    let filter_start = || {
        let x = last_at_or_before(ephemeris, tracks[0].first_epoch()).ok_or_else(|| Error::invalid("ephemeris starts after the first track"))?;
        initial_estimate(x, &cfg.harness.filter_covariance_lvlh(), false, 0)
    };
    Ok(run_segments(&inputs, detectors, cfg, segment_start, filter_start))
}
