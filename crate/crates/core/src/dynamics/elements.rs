use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::InertialState;
use crate::error::{Error, Result};

/// Osculating Keplerian elements. Angles in radians, `a` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
}

fn solve_kepler(m: f64, e: f64) -> f64 {
    let m = m.rem_euclid(TAU);
    let mut ea = if e < 0.8 { m } else { std::f64::consts::PI };
    for _ in 0..50 {
        let f = ea - e * ea.sin() - m;
        let d = f / (1.0 - e * ea.cos());
        ea -= d;
        if d.abs() < 1e-15 {
            break;
        }
    }
    ea
}

impl KeplerianElements {
    pub fn to_state(&self, epoch: f64, mu: f64) -> Result<InertialState> {
        if !(self.a > 0.0) || !(0.0..1.0).contains(&self.e) {
            return Err(Error::invalid("elements must describe a closed orbit"));
        }
        let ea = solve_kepler(self.mean_anomaly, self.e);
        let (se, ce) = ea.sin_cos();
        let b = (1.0 - self.e * self.e).sqrt();
        let r_pf = Vector3::new(self.a * (ce - self.e), self.a * b * se, 0.0);
        let rdot = (mu * self.a).sqrt() / (self.a * (1.0 - self.e * ce));
        let v_pf = Vector3::new(-rdot * se, rdot * b * ce, 0.0);
        let rot = perifocal_to_inertial(self.raan, self.i, self.argp);
        Ok(InertialState::new(epoch, rot * r_pf, rot * v_pf))
    }

    pub fn from_state(x: &InertialState, mu: f64) -> Result<Self> {
        let r = x.r;
        let v = x.v;
        let rn = r.norm();
        let h = r.cross(&v);
        let hn = h.norm();
        if hn == 0.0 {
            return Err(Error::SingularFrame);
        }
        let energy = v.norm_squared() / 2.0 - mu / rn;
        if energy >= 0.0 {
            return Err(Error::invalid("state is not on a closed orbit"));
        }
        let a = -mu / (2.0 * energy);
        let e_vec = v.cross(&h) / mu - r / rn;
        let e = e_vec.norm();
        let i = (h.z / hn).clamp(-1.0, 1.0).acos();
        let node = Vector3::z().cross(&h);
        let nn = node.norm();
        let raan = if nn > 1e-12 * hn { node.y.atan2(node.x).rem_euclid(TAU) } else { 0.0 };
        // argument of latitude and perigee measured in the orbital plane
        let p_hat = if nn > 1e-12 * hn { node / nn } else { Vector3::x() };
        let q_hat = (h / hn).cross(&p_hat);
        let u = r.dot(&q_hat).atan2(r.dot(&p_hat));
        let (argp, nu) = if e > 1e-12 {
            let w = e_vec.dot(&q_hat).atan2(e_vec.dot(&p_hat));
            (w.rem_euclid(TAU), (u - w).rem_euclid(TAU))
        } else {
            (0.0, u.rem_euclid(TAU))
        };
        let ea = 2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (nu / 2.0).tan()).atan();
        let m = (ea - e * ea.sin()).rem_euclid(TAU);
        Ok(Self { a, e, i, raan, argp, mean_anomaly: m })
    }
}

fn perifocal_to_inertial(raan: f64, i: f64, argp: f64) -> Matrix3<f64> {
    let (so, co) = raan.sin_cos();
    let (si, ci) = i.sin_cos();
    let (sw, cw) = argp.sin_cos();
    Matrix3::new(
        co * cw - so * sw * ci,
        -co * sw - so * cw * ci,
        so * si,
        so * cw + co * sw * ci,
        -so * sw + co * cw * ci,
        -co * si,
        sw * si,
        cw * si,
        ci,
    )
}
