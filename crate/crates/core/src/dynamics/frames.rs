//! Local orbital frame, Earth rotation and geodetic station placement.
//!
//! The inertial frame is an Earth-centred frame whose z-axis is the Earth's
//! spin axis. The Earth-fixed frame rotates uniformly about z with
//! `earth_rotation_rate`; its prime meridian lies at `gmst_at_reference` from the
//! inertial x-axis at scenario time zero. No precession, nutation or polar motion.

use nalgebra::{Matrix3, Vector3};

use super::{DynamicsConfig, InertialState};
use crate::error::{Error, Result};

/// Rotation taking LVLH components to inertial components.
///
/// Columns: radial (r̂), along-track (ĥ × r̂), orbit normal (ĥ = r × v / |r × v|).
pub fn lvlh_basis(x: &InertialState) -> Result<Matrix3<f64>> {
    lvlh_from_rv(&x.r, &x.v).ok_or(Error::SingularFrame)
}

#[inline]
pub(crate) fn lvlh_from_rv(r: &Vector3<f64>, v: &Vector3<f64>) -> Option<Matrix3<f64>> {
    let rn = r.norm();
    let h = r.cross(v);
    let hn = h.norm();
    if !(rn > 0.0) || !(hn > 1e-12 * rn * v.norm().max(1e-300)) {
        return None;
    }
    let x = r / rn;
    let z = h / hn;
    let y = z.cross(&x);
    Some(Matrix3::from_columns(&[x, y, z]))
}

/// Earth rotation angle (Greenwich sidereal angle) at scenario time `t`, rad.
pub fn earth_rotation_angle(t: f64, cfg: &DynamicsConfig) -> f64 {
    cfg.gmst_at_reference + cfg.earth_rotation_rate * t
}

/// Rotation taking Earth-fixed components to inertial components at time `t`.
pub fn ecef_to_inertial(t: f64, cfg: &DynamicsConfig) -> Matrix3<f64> {
    let th = earth_rotation_angle(t, cfg);
    let (s, c) = th.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Earth-fixed position of a geodetic point on the reference ellipsoid, m.
pub fn geodetic_to_ecef(lat: f64, lon: f64, alt: f64, cfg: &DynamicsConfig) -> Vector3<f64> {
    let a = cfg.earth_radius;
    let f = cfg.flattening;
    let e2 = f * (2.0 - f);
    let (sl, cl) = lat.sin_cos();
    let n = a / (1.0 - e2 * sl * sl).sqrt();
    let (so, co) = lon.sin_cos();
    Vector3::new((n + alt) * cl * co, (n + alt) * cl * so, (n * (1.0 - e2) + alt) * sl)
}

/// East-North-Up basis at a geodetic point, expressed in Earth-fixed axes
/// (columns e, n, u).
pub fn enu_basis(lat: f64, lon: f64) -> Matrix3<f64> {
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    let e = Vector3::new(-so, co, 0.0);
    let n = Vector3::new(-sl * co, -sl * so, cl);
    let u = Vector3::new(cl * co, cl * so, sl);
    Matrix3::from_columns(&[e, n, u])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lvlh_axis_aligned_case() {
        let x = InertialState::new(0.0, Vector3::new(7.0e6, 0.0, 0.0), Vector3::new(0.0, 7.5e3, 0.0));
        let r = lvlh_basis(&x).unwrap();
        assert!((r * Vector3::x() - Vector3::x()).norm() < 1e-15);
        assert!((r * Vector3::z() - Vector3::z()).norm() < 1e-15);
        assert!((r * Vector3::y() - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn lvlh_rejects_rectilinear_state() {
        let x = InertialState::new(0.0, Vector3::new(7.0e6, 0.0, 0.0), Vector3::new(100.0, 0.0, 0.0));
        assert!(matches!(lvlh_basis(&x), Err(Error::SingularFrame)));
    }

    #[test]
    fn station_on_equator_sits_at_radius() {
        let cfg = DynamicsConfig::default();
        let p = geodetic_to_ecef(0.0, 0.0, 0.0, &cfg);
        assert!((p - Vector3::new(cfg.earth_radius, 0.0, 0.0)).norm() < 1e-6);
        let pole = geodetic_to_ecef(std::f64::consts::FRAC_PI_2, 0.0, 0.0, &cfg);
        let b = cfg.earth_radius * (1.0 - cfg.flattening);
        assert!((pole.z - b).abs() < 1e-6);
    }

    #[test]
    fn enu_is_orthonormal_right_handed() {
        let m = enu_basis(0.7, -0.07);
        assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-14);
        assert!((m.determinant() - 1.0).abs() < 1e-14);
    }
}
