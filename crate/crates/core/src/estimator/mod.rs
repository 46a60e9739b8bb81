//! End-to-end estimation, evaluation and the test-data tooling around it.

pub mod bounds;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod synthetic;

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{estimate_planned, EstimateOptions, PlannedQuery};
use crate::state::State;

pub use bounds::{error_bound_check, BoundReport};
pub use metrics::{q_error, ratio, Summary};
pub use oracle::{oracle_count, oracle_count_with_cap, DEFAULT_ORACLE_CAP};
pub use synthetic::{generate_synthetic, AttributeMode, Layout, SyntheticData, SyntheticSpec};

/// Outcome of estimating one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub query: String,
    /// Rounded to the nearest integer.
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_cardinality: Option<u128>,
    #[serde(
        serialize_with = "metrics::finite_or_tag",
        skip_serializing_if = "Option::is_none"
    )]
    pub q_error: Option<f64>,
    #[serde(
        serialize_with = "metrics::finite_or_tag",
        skip_serializing_if = "Option::is_none"
    )]
    pub ratio: Option<f64>,
    /// Wall-clock time of parsing, planning and inference.
    pub latency_ms: f64,
}

impl EstimationReport {
    /// Attach a true count. A zero truth leaves both metrics unset because
    /// neither is defined for it.
    pub fn with_truth(mut self, truth: u128) -> Self {
        let t = truth as f64;
        self.true_cardinality = Some(truth);
        self.q_error = q_error(self.estimate, t).ok();
        self.ratio = ratio(self.estimate, t).ok();
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Estimate `text` against `state`; `None` means no state has been built.
pub fn estimate(text: &str, state: Option<&State>, opts: EstimateOptions) -> Result<EstimationReport> {
    let state = state.ok_or(Error::StateNotBuilt)?;
    Estimator::new(state, opts).estimate(text)
}

/// Read-only estimator bound to one state; safe to share across threads.
#[derive(Debug, Clone, Copy)]
pub struct Estimator<'a> {
    pub state: &'a State,
    pub options: EstimateOptions,
}

impl<'a> Estimator<'a> {
    pub fn new(state: &'a State, options: EstimateOptions) -> Self {
        Estimator { state, options }
    }

    pub fn estimate(&self, text: &str) -> Result<EstimationReport> {
        let start = Instant::now();
        let pq = PlannedQuery::parse(text, self.state)?;
        let estimate = estimate_planned(&pq, self.state, self.options)?.round();
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(EstimationReport {
            query: text.to_string(),
            estimate,
            true_cardinality: None,
            q_error: None,
            ratio: None,
            latency_ms,
        })
    }

    /// Unrounded estimate, without timing or report construction.
    pub fn value(&self, text: &str) -> Result<f64> {
        let pq = PlannedQuery::parse(text, self.state)?;
        estimate_planned(&pq, self.state, self.options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{build_state, BuildConfig};

    #[test]
    fn unbuilt_state_is_reported() {
        let r = estimate("SELECT COUNT(*) FROM t", None, EstimateOptions::default());
        assert!(matches!(r, Err(Error::StateNotBuilt)));
        assert_eq!(Error::StateNotBuilt.to_string(), "state not built");
    }

    #[test]
    fn single_table_count_is_exact() {
        let spec = SyntheticSpec::new(Layout::Star, 2, 321, 1.0);
        let d = generate_synthetic(&spec, 4).unwrap();
        let st = build_state(&d.schema, &d.tables, BuildConfig::default()).unwrap();
        let r = estimate("SELECT COUNT(*) FROM t1", Some(&st), EstimateOptions::default()).unwrap();
        assert_eq!(r.estimate, 321.0);
        let r = r.with_truth(321);
        assert_eq!(r.q_error, Some(1.0));
        assert_eq!(r.ratio, Some(1.0));
    }

    #[test]
    fn infinite_q_error_serializes_as_tag() {
        let r = EstimationReport {
            query: "q".into(),
            estimate: 0.0,
            true_cardinality: None,
            q_error: None,
            ratio: None,
            latency_ms: 0.5,
        }
        .with_truth(4);
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(v["q_error"], "inf");
        assert_eq!(v["ratio"], 0.0);
        assert_eq!(v["true_cardinality"], 4);
    }
}
