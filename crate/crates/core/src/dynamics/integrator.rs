//! Dormand–Prince 5(4) with FSAL, local error control and optional step recording.
//!
//! Recording the accepted step sequence lets finite-difference Jacobians replay
//! perturbed trajectories through the same discrete map, so that the difference
//! quotient is free of step-selection noise.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    /// Absolute tolerance on position components, m.
    pub atol_position: f64,
    /// Absolute tolerance on velocity components, m/s.
    pub atol_velocity: f64,
    /// First trial step, s.
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol_position: 1e-6,
            atol_velocity: 1e-9,
            initial_step: 30.0,
            max_step: 300.0,
            max_steps: 2_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, used only for the error estimate
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand–Prince step. Returns (y_new, k7 = f(t+h, y_new), error vector).
#[inline]
fn dp_step<F>(f: &F, t: f64, y: &Vector6<f64>, k1: &Vector6<f64>, h: f64) -> (Vector6<f64>, Vector6<f64>, Vector6<f64>)
where
    F: Fn(f64, &Vector6<f64>) -> Vector6<f64>,
{
    let k2 = f(t + C2 * h, &(y + k1 * (A21 * h)));
    let k3 = f(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h));
    let k4 = f(t + C4 * h, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
    let k5 = f(t + C5 * h, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h));
    let k6 = f(t + h, &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h));
    let y_new = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
    let k7 = f(t + h, &y_new);
    let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
    (y_new, k7, err)
}

fn error_norm(cfg: &IntegratorConfig, y: &Vector6<f64>, y_new: &Vector6<f64>, err: &Vector6<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..6 {
        let atol = if i < 3 { cfg.atol_position } else { cfg.atol_velocity };
        let sc = atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / 6.0).sqrt()
}

/// Adaptive integration of `f` from `t0` to `t1` (either direction).
///
/// `h_guess` is the magnitude of the first trial step. Accepted steps are pushed
/// into `record` when given. `check` runs after every accepted step and may abort.
/// Returns the final state and the magnitude of the next proposed step.
pub(crate) fn integrate<F, C>(
    f: &F,
    t0: f64,
    y0: Vector6<f64>,
    t1: f64,
    h_guess: f64,
    cfg: &IntegratorConfig,
    mut record: Option<&mut Vec<f64>>,
    check: C,
) -> Result<(Vector6<f64>, f64)>
where
    F: Fn(f64, &Vector6<f64>) -> Vector6<f64>,
    C: Fn(f64, &Vector6<f64>) -> Result<()>,
{
    if t1 == t0 {
        return Ok((y0, h_guess));
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h_mag = h_guess.abs().min(cfg.max_step).max(1e-6);
    let mut steps = 0usize;

    loop {
        let remaining = (t1 - t).abs();
        let last = h_mag >= remaining;
        let h = if last { t1 - t } else { dir * h_mag };

        let (y_new, k7, err) = dp_step(f, t, &y, &k1, h);
        let en = error_norm(cfg, &y, &y_new, &err);
        if !en.is_finite() {
            return Err(Error::Divergence { epoch: t });
        }
        let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };

        if en <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            if let Some(rec) = record.as_deref_mut() {
                rec.push(h);
            }
            check(t, &y)?;
            if last {
                return Ok((y, (h_mag * factor).min(cfg.max_step)));
            }
            h_mag = (h_mag * factor).min(cfg.max_step);
        } else {
            h_mag *= factor.min(1.0);
            if h_mag < 1e-9 {
                return Err(Error::Divergence { epoch: t });
            }
        }
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Divergence { epoch: t });
        }
    }
}

/// Replays a recorded step sequence without error control. The final step is
/// snapped onto `t1`.
pub(crate) fn integrate_fixed<F, C>(f: &F, t0: f64, y0: Vector6<f64>, t1: f64, steps: &[f64], check: C) -> Result<Vector6<f64>>
where
    F: Fn(f64, &Vector6<f64>) -> Vector6<f64>,
    C: Fn(f64, &Vector6<f64>) -> Result<()>,
{
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    for (i, &h) in steps.iter().enumerate() {
        let (y_new, k7, _) = dp_step(f, t, &y, &k1, h);
        t = if i + 1 == steps.len() { t1 } else { t + h };
        y = y_new;
        k1 = k7;
        check(t, &y)?;
    }
    Ok(y)
}
