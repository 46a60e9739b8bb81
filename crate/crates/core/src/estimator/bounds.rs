use serde::Serialize;

use crate::error::{Error, Result};
use crate::hist::TkHist1D;

/// Per-bin outcome of [`error_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    /// `sqrt(n) * NV / |bin|` per bin; 0 for an empty bin.
    pub scores: Vec<f64>,
    pub violating: Vec<usize>,
}

impl BoundReport {
    pub fn passing(&self) -> usize {
        self.scores.len() - self.violating.len()
    }

    pub fn all_pass(&self) -> bool {
        self.violating.is_empty()
    }
}

/// Flags the bins whose background share is too large for the combined
/// error budget `epsilon`, i.e. `sqrt(n) * NV_i / |bin_i| >= epsilon`
/// where `n` is the bin count. Such bins benefit from a larger `k`.
pub fn error_bound_check(hist: &TkHist1D, epsilon: f64) -> Result<BoundReport> {
    if hist.bins.is_empty() || hist.total_rows == 0 {
        return Err(Error::InvalidArgument("histogram is empty".into()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let root_n = (hist.bins.len() as f64).sqrt();
    let scores: Vec<f64> = hist
        .bins
        .iter()
        .map(|b| match b.total() {
            0 => 0.0,
            rows => root_n * b.nv as f64 / rows as f64,
        })
        .collect();
    let violating = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= epsilon)
        .map(|(i, _)| i)
        .collect();
    Ok(BoundReport {
        epsilon,
        scores,
        violating,
    })
}
