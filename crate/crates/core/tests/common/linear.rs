//! Constant-velocity surrogate with closed-form Kalman filter and RTS smoother.

use mandet::ukf::*;
use mandet::Result;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const Q_PSD: f64 = 0.05;

pub struct ConstantVelocity;

pub fn transition(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0])
}

pub fn noise(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt]) * Q_PSD
}

impl ProcessModel for ConstantVelocity {
    fn dim(&self) -> usize {
        2
    }
    fn propagate(&self, x: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        Ok(transition(t1 - t0) * x)
    }
    fn process_noise(&self, _x: &DVector<f64>, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
        Ok(noise(t1 - t0))
    }
}

pub struct PositionSensor;

impl MeasurementModel for PositionSensor {
    fn dim(&self) -> usize {
        1
    }
    fn predict(&self, x: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![x[0]]))
    }
}

pub fn h() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
}

pub struct Oracle {
    pub pred: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub filt: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub dts: Vec<f64>,
}

pub fn kalman(x0: &DVector<f64>, p0: &DMatrix<f64>, meas: &[Measurement], t0: f64) -> Oracle {
    let (mut x, mut p, mut t) = (x0.clone(), p0.clone(), t0);
    let mut o = Oracle { pred: vec![], filt: vec![], dts: vec![] };
    for m in meas {
        let dt = m.epoch - t;
        let f = transition(dt);
        let xp = &f * &x;
        let pp = &f * &p * f.transpose() + noise(dt);
        let s = &h() * &pp * h().transpose() + &m.r;
        let k = &pp * h().transpose() * s.clone().try_inverse().unwrap();
        x = &xp + &k * (&m.z - &h() * &xp);
        let i_kh = DMatrix::identity(2, 2) - &k * h();
        p = &i_kh * &pp * i_kh.transpose() + &k * &m.r * k.transpose();
        o.pred.push((xp, pp));
        o.filt.push((x.clone(), p.clone()));
        o.dts.push(dt);
        t = m.epoch;
    }
    o
}

pub fn rts(o: &Oracle) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let n = o.filt.len();
    let mut out = o.filt.clone();
    for k in (0..n - 1).rev() {
        let f = transition(o.dts[k + 1]);
        let (xf, pf) = &o.filt[k];
        let (xp, pp) = &o.pred[k + 1];
        let g = pf * f.transpose() * pp.clone().try_inverse().unwrap();
        let x = xf + &g * (&out[k + 1].0 - xp);
        let p = pf + &g * (&out[k + 1].1 - pp) * g.transpose();
        out[k] = (x, p);
    }
    out
}

pub fn scenario() -> (StateEstimate, Vec<Measurement>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = 0.0;
    let meas = (0..50)
        .map(|k| {
            t += 1.0 + (k % 3) as f64 * 0.5;
            let e: f64 = StandardNormal.sample(&mut rng);
            Measurement { epoch: t, z: DVector::from_vec(vec![2.0 * t + 0.01 * t * t + 0.3 * e]), r: DMatrix::from_element(1, 1, 0.09) }
        })
        .collect();
    let est = StateEstimate::new(0.0, DVector::from_vec(vec![0.5, 1.0]), DMatrix::from_row_slice(2, 2, &[4.0, 0.5, 0.5, 1.0]));
    (est, meas)
}

pub fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    (a - b).norm() <= 1e-8 * b.norm().max(1.0)
}

pub fn run(ukf: &Ukf<ConstantVelocity>, est: &StateEstimate, meas: &[Measurement]) -> Vec<FilterStep> {
    let mut cur = est.clone();
    meas.iter()
        .map(|m| {
            let s = ukf.step(&cur, m, &PositionSensor, true).unwrap();
            cur = s.filtered.clone();
            s
        })
        .collect()
}
