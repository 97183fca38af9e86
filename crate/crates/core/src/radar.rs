//! Ground radar geometry, pass search and noisy track synthesis.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ecef_to_inertial, enu_basis, geodetic_to_ecef, DynamicsConfig, InertialState, Trajectory};
use crate::epoch::{from_iso, to_iso};
use crate::error::{Error, Result};

/// One-sigma plot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotSigmas {
    pub range: f64,
    pub range_rate: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarStation {
    pub name: String,
    /// Geodetic latitude, rad.
    pub latitude: f64,
    pub longitude: f64,
    /// Height above the ellipsoid, m.
    pub altitude: f64,
    pub min_elevation: f64,
    /// Seconds between plots of a track.
    pub plot_cadence: f64,
    pub sigmas: PlotSigmas,
    /// Field of regard in azimuth `[from, to]`, clockwise from North, rad.
    /// The window may wrap through North.
    pub azimuth_window: Option<[f64; 2]>,
}

impl Default for RadarStation {
    fn default() -> Self {
        Self {
            name: "station".into(),
            latitude: 40f64.to_radians(),
            longitude: (-4f64).to_radians(),
            altitude: 700.0,
            min_elevation: 10f64.to_radians(),
            plot_cadence: 10.0,
            sigmas: PlotSigmas {
                range: 10.0,
                range_rate: 0.5,
                azimuth: 0.2f64.to_radians(),
                elevation: 0.2f64.to_radians(),
            },
            azimuth_window: None,
        }
    }
}

impl RadarStation {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sigmas;
        if self.latitude.abs() > std::f64::consts::FRAC_PI_2
            || !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.min_elevation)
            || !(self.plot_cadence > 0.0)
            || !(s.range >= 0.0 && s.range_rate >= 0.0 && s.azimuth >= 0.0 && s.elevation >= 0.0)
        {
            return Err(Error::invalid(format!("station {} has invalid geometry or sigmas", self.name)));
        }
        Ok(())
    }

    /// Inertial position and velocity of the station at time `t`.
    pub fn inertial_position_velocity(&self, t: f64, cfg: &DynamicsConfig) -> (Vector3<f64>, Vector3<f64>) {
        let rot = ecef_to_inertial(t, cfg);
        let p = rot * geodetic_to_ecef(self.latitude, self.longitude, self.altitude, cfg);
        let w = Vector3::new(0.0, 0.0, cfg.earth_rotation_rate);
        (p, w.cross(&p))
    }

    fn in_azimuth_window(&self, az: f64) -> bool {
        match self.azimuth_window {
            None => true,
            Some([from, to]) => {
                let span = (to - from).rem_euclid(TAU);
                (az - from).rem_euclid(TAU) <= span
            }
        }
    }

    pub fn is_visible(&self, o: &Observation) -> bool {
        o.elevation >= self.min_elevation && self.in_azimuth_window(o.azimuth)
    }
}

/// Noise-free radar observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub range: f64,
    pub range_rate: f64,
    /// Clockwise from North, in `[0, 2π)`.
    pub azimuth: f64,
    pub elevation: f64,
}

/// Range, range rate (with station motion from Earth rotation), azimuth and elevation.
pub fn observe(x: &InertialState, station: &RadarStation, cfg: &DynamicsConfig) -> Observation {
    let (ps, vs) = station.inertial_position_velocity(x.epoch, cfg);
    let rho_vec = x.r - ps;
    let rho = rho_vec.norm();
    let range_rate = rho_vec.dot(&(x.v - vs)) / rho;
    let enu = ecef_to_inertial(x.epoch, cfg) * enu_basis(station.latitude, station.longitude);
    let local = enu.transpose() * rho_vec;
    let azimuth = local.x.atan2(local.y).rem_euclid(TAU);
    let elevation = (local.z / rho).clamp(-1.0, 1.0).asin();
    Observation { range: rho, range_rate, azimuth, elevation }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPlot {
    pub epoch: f64,
    pub range: f64,
    pub range_rate: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub sigmas: PlotSigmas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarTrack {
    pub station: String,
    pub plots: Vec<RadarPlot>,
}

impl RadarTrack {
    pub fn new(station: impl Into<String>, plots: Vec<RadarPlot>) -> Result<Self> {
        if plots.len() < 2 {
            return Err(Error::TooFewPlots { got: plots.len(), needed: 2 });
        }
        if plots.windows(2).any(|w| !(w[1].epoch > w[0].epoch)) {
            return Err(Error::invalid("track epochs must be strictly increasing"));
        }
        Ok(Self { station: station.into(), plots })
    }

    pub fn first_epoch(&self) -> f64 {
        self.plots[0].epoch
    }

    pub fn last_epoch(&self) -> f64 {
        self.plots.last().unwrap().epoch
    }

    pub fn mid_epoch(&self) -> f64 {
        0.5 * (self.first_epoch() + self.last_epoch())
    }

    pub fn len(&self) -> usize {
        self.plots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plots.is_empty()
    }
}

/// Visibility interval `[rise, set]`, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pass {
    pub rise: f64,
    pub set: f64,
}

impl Pass {
    pub fn duration(&self) -> f64 {
        self.set - self.rise
    }
}

const SCAN_STEP: f64 = 10.0;
const REFINE_TOL: f64 = 0.1;

/// Visibility intervals inside `[t0, t1]`, found by a 10 s scan and refined
/// by bisection to 0.1 s.
pub fn find_passes<F>(state_at: F, station: &RadarStation, cfg: &DynamicsConfig, t0: f64, t1: f64) -> Result<Vec<Pass>>
where
    F: Fn(f64) -> Result<InertialState>,
{
    let visible = |t: f64| -> Result<bool> { Ok(station.is_visible(&observe(&state_at(t)?, station, cfg))) };
    let refine = |mut a: f64, mut b: f64, a_vis: bool| -> Result<f64> {
        while b - a > REFINE_TOL {
            let m = 0.5 * (a + b);
            if visible(m)? == a_vis {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(if a_vis { a } else { b })
    };

    let mut passes = Vec::new();
    let mut t_prev = t0;
    let mut vis_prev = visible(t0)?;
    let mut rise = if vis_prev { Some(t0) } else { None };
    let mut t = t0;
    while t < t1 {
        t = (t + SCAN_STEP).min(t1);
        let vis = visible(t)?;
        if vis != vis_prev {
            if vis {
                rise = Some(refine(t_prev, t, false)?);
            } else if let Some(r) = rise.take() {
                passes.push(Pass { rise: r, set: refine(t_prev, t, true)? });
            }
        }
        t_prev = t;
        vis_prev = vis;
    }
    if let Some(r) = rise {
        passes.push(Pass { rise: r, set: t1 });
    }
    Ok(passes)
}

/// Plot epochs of a pass: whole seconds from the first whole second after rise,
/// spaced by the station cadence.
pub fn plot_epochs(pass: &Pass, cadence: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = pass.rise.ceil();
    while t <= pass.set {
        out.push(t);
        t += cadence;
    }
    out
}

/// Noisy track over `pass`, deterministic in `seed`.
pub fn synthesize_track(truth: &Trajectory, station: &RadarStation, pass: &Pass, seed: u64, cfg: &DynamicsConfig) -> Result<RadarTrack> {
    let epochs = plot_epochs(pass, station.plot_cadence);
    if epochs.len() < 2 {
        return Err(Error::TooFewPlots { got: epochs.len(), needed: 2 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let s = station.sigmas;
    let mut plots = Vec::with_capacity(epochs.len());
    for t in epochs {
        let o = observe(&truth.state_at(t)?, station, cfg);
        let n: [f64; 4] = std::array::from_fn(|_| unit.sample(&mut rng));
        plots.push(RadarPlot {
            epoch: t,
            range: o.range + s.range * n[0],
            range_rate: o.range_rate + s.range_rate * n[1],
            azimuth: (o.azimuth + s.azimuth * n[2]).rem_euclid(TAU),
            elevation: o.elevation + s.elevation * n[3],
            sigmas: s,
        });
    }
    RadarTrack::new(station.name.clone(), plots)
}

#[derive(Serialize, Deserialize)]
struct TrackRow {
    epoch_iso: String,
    range_m: f64,
    range_rate_mps: f64,
    azimuth_rad: f64,
    elevation_rad: f64,
    sigma_range_m: f64,
    sigma_rr_mps: f64,
    sigma_az_rad: f64,
    sigma_el_rad: f64,
}

pub fn write_track_csv(track: &RadarTrack, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &track.plots {
        w.serialize(TrackRow {
            epoch_iso: to_iso(p.epoch),
            range_m: p.range,
            range_rate_mps: p.range_rate,
            azimuth_rad: p.azimuth,
            elevation_rad: p.elevation,
            sigma_range_m: p.sigmas.range,
            sigma_rr_mps: p.sigmas.range_rate,
            sigma_az_rad: p.sigmas.azimuth,
            sigma_el_rad: p.sigmas.elevation,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_track_csv(path: &Path, station: &str) -> Result<RadarTrack> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut plots = Vec::new();
    for row in r.deserialize() {
        let row: TrackRow = row?;
        plots.push(RadarPlot {
            epoch: from_iso(&row.epoch_iso)?,
            range: row.range_m,
            range_rate: row.range_rate_mps,
            azimuth: row.azimuth_rad,
            elevation: row.elevation_rad,
            sigmas: PlotSigmas {
                range: row.sigma_range_m,
                range_rate: row.sigma_rr_mps,
                azimuth: row.sigma_az_rad,
                elevation: row.sigma_el_rad,
            },
        });
    }
    RadarTrack::new(station, plots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equatorial_station() -> RadarStation {
        RadarStation { latitude: 0.0, longitude: 0.0, altitude: 0.0, ..RadarStation::default() }
    }

    #[test]
    fn zenith_geometry() {
        let cfg = DynamicsConfig::default();
        let st = equatorial_station();
        let r = Vector3::new(cfg.earth_radius + 700e3, 0.0, 0.0);
        let x = InertialState::new(0.0, r, Vector3::new(0.0, 0.0, 7.5e3));
        let o = observe(&x, &st, &cfg);
        assert!((o.range - 700e3).abs() < 1e-6);
        assert!((o.elevation - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn culmination_has_zero_range_rate() {
        let cfg = DynamicsConfig::default();
        let st = equatorial_station();
        let r = Vector3::new(cfg.earth_radius + 700e3, 0.0, 0.0);
        let (_, vs) = st.inertial_position_velocity(0.0, &cfg);
        // satellite moving north, with the station's eastward speed added
        let x = InertialState::new(0.0, r, Vector3::new(0.0, vs.y * r.x / cfg.earth_radius, 7.5e3));
        assert!(observe(&x, &st, &cfg).range_rate.abs() < 1e-6);
    }

    #[test]
    fn north_is_zero_azimuth_east_is_quarter_turn() {
        let cfg = DynamicsConfig::default();
        let st = equatorial_station();
        let base = Vector3::new(cfg.earth_radius, 0.0, 0.0);
        let v = Vector3::new(0.0, 7.5e3, 0.0);
        let north = observe(&InertialState::new(0.0, base + Vector3::new(1e5, 0.0, 5e5), v), &st, &cfg);
        let east = observe(&InertialState::new(0.0, base + Vector3::new(1e5, 5e5, 0.0), v), &st, &cfg);
        assert!(north.azimuth.abs() < 1e-12 || (north.azimuth - TAU).abs() < 1e-12);
        assert!((east.azimuth - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn azimuth_window_wraps_through_north() {
        let st = RadarStation { azimuth_window: Some([350f64.to_radians(), 10f64.to_radians()]), ..RadarStation::default() };
        assert!(st.in_azimuth_window(5f64.to_radians()));
        assert!(st.in_azimuth_window(355f64.to_radians()));
        assert!(!st.in_azimuth_window(180f64.to_radians()));
    }

    #[test]
    fn short_pass_is_rejected() {
        let epochs = plot_epochs(&Pass { rise: 0.5, set: 5.0 }, 10.0);
        assert_eq!(epochs, vec![1.0]);
    }
}
