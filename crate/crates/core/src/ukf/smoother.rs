use nalgebra::DMatrix;

use super::{FilterStep, StateEstimate};
use crate::error::{Error, Result};

pub type SmoothedState = StateEstimate;

/// Rauch–Tung–Striebel backward pass over a contiguous filter history, using
/// the stored sigma-point cross-covariances as the smoother gain numerator.
///
/// `steps[k + 1]` must have been predicted from `steps[k].filtered`. The last
/// entry is returned unchanged.
pub fn rts_smooth(steps: &[FilterStep]) -> Result<Vec<SmoothedState>> {
    let Some(last) = steps.last() else {
        return Ok(Vec::new());
    };
    let mut out = vec![last.filtered.clone(); steps.len()];
    for k in (0..steps.len() - 1).rev() {
        let f = &steps[k].filtered;
        let next = &steps[k + 1];
        let chol = next
            .predicted
            .p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Covariance("predicted covariance in smoother".into()))?;
        let gain: DMatrix<f64> = chol.solve(&next.cross.transpose()).transpose();
        let s_next = &out[k + 1];
        let x = &f.x + &gain * (&s_next.x - &next.predicted.x);
        let p = &f.p + &gain * (&s_next.p - &next.predicted.p) * gain.transpose();
        out[k] = StateEstimate::new(f.epoch, x, 0.5 * (&p + p.transpose()));
    }
    Ok(out)
}
