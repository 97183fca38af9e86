use serde::{Deserialize, Serialize};

use super::PlotResidual;
use crate::statkit::{pr_md, ChiSquareArgument};

/// Per-track summary of the normalized innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackMetric {
    pub psi_first: f64,
    pub psi_max: f64,
    /// (1/n)·√(Σ Ψ_i).
    pub psi_aggregate: f64,
    /// Manoeuvre probability from the first-plot innovation.
    pub probability: f64,
}

/// Metrics over the pre-smoothing residuals of one track. `None` for an empty slice.
pub fn track_metric(residuals: &[PlotResidual], dof: usize, arg: ChiSquareArgument) -> Option<TrackMetric> {
    let first = residuals.first()?.psi;
    let n = residuals.len() as f64;
    let psi_max = residuals.iter().map(|r| r.psi).fold(f64::NEG_INFINITY, f64::max);
    let psi_aggregate = residuals.iter().map(|r| r.psi).sum::<f64>().sqrt() / n;
    Some(TrackMetric { psi_first: first, psi_max, psi_aggregate, probability: pr_md(first, dof, arg) })
}
