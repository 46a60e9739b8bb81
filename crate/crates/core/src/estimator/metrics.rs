use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// `max(est, truth) / min(est, truth)`. A zero estimate against a positive
/// truth is infinitely wrong rather than clamped.
pub fn q_error(est: f64, truth: f64) -> Result<f64> {
    if truth <= 0.0 {
        return Err(Error::UndefinedTruth);
    }
    if est <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(est.max(truth) / est.min(truth))
}

/// `est / truth`; above 1 means over-estimation.
pub fn ratio(est: f64, truth: f64) -> Result<f64> {
    if truth <= 0.0 {
        return Err(Error::UndefinedTruth);
    }
    Ok(est / truth)
}

/// Percentile `p` in `[0, 100]` of ascending `sorted` values with linear
/// interpolation between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return Some(a);
    }
    if a.is_infinite() || b.is_infinite() {
        return Some(b);
    }
    Some(a + (b - a) * (rank - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

/// Writes non-finite numbers as `"inf"` / `"-inf"` / `"nan"` strings since
/// JSON has no literal for them.
pub(crate) fn finite_or_tag<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) => s.serialize_str(&fmt_num(*x)),
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

/// Aggregate accuracy and latency of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub queries: usize,
    /// Queries with a known truth and an estimate.
    pub scored: usize,
    pub failed: usize,
    #[serde(serialize_with = "finite_or_tag")]
    pub median: Option<f64>,
    #[serde(serialize_with = "finite_or_tag")]
    pub p90: Option<f64>,
    #[serde(serialize_with = "finite_or_tag")]
    pub p95: Option<f64>,
    #[serde(serialize_with = "finite_or_tag")]
    pub p99: Option<f64>,
    #[serde(serialize_with = "finite_or_tag")]
    pub max: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    pub state_size: usize,
}

impl Summary {
    pub fn from_values(q_errors: &[f64], latencies_ms: &[f64], failed: usize, state_size: usize) -> Summary {
        let mut q = q_errors.to_vec();
        q.sort_by(f64::total_cmp);
        let mean_latency_ms = if latencies_ms.is_empty() {
            None
        } else {
            Some(latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64)
        };
        Summary {
            queries: latencies_ms.len() + failed,
            scored: q.len(),
            failed,
            median: percentile(&q, 50.0),
            p90: percentile(&q, 90.0),
            p95: percentile(&q, 95.0),
            p99: percentile(&q, 99.0),
            max: q.last().copied(),
            mean_latency_ms,
            state_size,
        }
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "queries",
        "scored",
        "failed",
        "median",
        "p90",
        "p95",
        "p99",
        "max",
        "mean_latency_ms",
        "state_size",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        vec![
            self.queries.to_string(),
            self.scored.to_string(),
            self.failed.to_string(),
            opt(self.median),
            opt(self.p90),
            opt(self.p95),
            opt(self.p99),
            opt(self.max),
            opt(self.mean_latency_ms),
            self.state_size.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Csv {
            table: "summary".into(),
            message: e.to_string(),
        };
        out.write_record(Self::CSV_HEADER).map_err(err)?;
        out.write_record(self.csv_fields()).map_err(err)?;
        out.flush().map_err(|e| Error::io("summary", e))
    }
}
