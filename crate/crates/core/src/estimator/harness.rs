//! Workload files, batch evaluation and hyper-parameter sweeps.
//!
//! A workload file holds one query per line. Blank lines and lines starting
//! with `--` are ignored. A line may end in `||<count>` giving the true
//! cardinality.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Schema, TableData};
use crate::error::{Error, Result};
use crate::estimator::metrics::{fmt_num, Summary};
use crate::estimator::oracle::oracle_count_with_cap;
use crate::estimator::{EstimationReport, Estimator};
use crate::pipeline::EstimateOptions;
use crate::query::parse_query;
use crate::state::{build_state, BuildConfig, State};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadEntry {
    /// 1-based line number in the source text.
    pub line: usize,
    pub query: String,
    pub truth: Option<u128>,
}

pub fn parse_workload(text: &str) -> Result<Vec<WorkloadEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        let (query, truth) = match line.rsplit_once("||") {
            Some((q, t)) => {
                let t = t.trim().parse::<u128>().map_err(|_| {
                    Error::InvalidArgument(format!("line {}: bad true cardinality {t:?}", i + 1))
                })?;
                (q.trim(), Some(t))
            }
            None => (line, None),
        };
        out.push(WorkloadEntry {
            line: i + 1,
            query: query.to_string(),
            truth,
        });
    }
    Ok(out)
}

pub fn read_workload(path: impl AsRef<Path>) -> Result<Vec<WorkloadEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_workload(&text)
}

/// Per-query result of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Record {
    Report(EstimationReport),
    /// The query could not be estimated.
    Error {
        line: usize,
        query: String,
        error: String,
    },
}

impl Record {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn report(&self) -> Option<&EstimationReport> {
        match self {
            Record::Report(r) => Some(r),
            Record::Error { .. } => None,
        }
    }
}

/// Source of true cardinalities for entries that carry none.
#[derive(Debug, Clone, Copy)]
pub struct OracleSource<'a> {
    pub tables: &'a BTreeMap<String, TableData>,
    pub cap: usize,
}

/// Truth per entry: the workload's own value, else the oracle's. `Err`
/// holds why the oracle could not provide one.
pub fn resolve_truths(
    schema: &Schema,
    entries: &[WorkloadEntry],
    oracle: Option<OracleSource<'_>>,
) -> Vec<std::result::Result<Option<u128>, String>> {
    entries
        .par_iter()
        .map(|e| match (e.truth, oracle) {
            (Some(t), _) => Ok(Some(t)),
            (None, None) => Ok(None),
            (None, Some(o)) => parse_query(&e.query, schema)
                .and_then(|q| oracle_count_with_cap(&q, o.tables, o.cap))
                .map(Some)
                .map_err(|err| err.to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub records: Vec<Record>,
    /// Queries whose truth the oracle could not provide, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub summary: Summary,
}

/// Estimate every entry; a failing query is recorded and does not stop the
/// run. Estimation is sequential so latencies are not perturbed by other
/// queries.
pub fn evaluate(
    state: &State,
    entries: &[WorkloadEntry],
    opts: EstimateOptions,
    oracle: Option<OracleSource<'_>>,
) -> Evaluation {
    let truths = resolve_truths(&state.schema, entries, oracle);
    evaluate_with_truths(state, entries, &truths, opts)
}

fn evaluate_with_truths(
    state: &State,
    entries: &[WorkloadEntry],
    truths: &[std::result::Result<Option<u128>, String>],
    opts: EstimateOptions,
) -> Evaluation {
    let est = Estimator::new(state, opts);
    let mut records = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    let mut q_errors = Vec::new();
    let mut latencies = Vec::new();
    let mut failed = 0;
    for (e, truth) in entries.iter().zip(truths) {
        match est.estimate(&e.query) {
            Ok(mut r) => {
                latencies.push(r.latency_ms);
                match truth {
                    Ok(Some(t)) => {
                        r = r.with_truth(*t);
                        q_errors.extend(r.q_error);
                    }
                    Ok(None) => {}
                    Err(why) => skipped.push((e.line, why.clone())),
                }
                records.push(Record::Report(r));
            }
            Err(err) => {
                failed += 1;
                records.push(Record::Error {
                    line: e.line,
                    query: e.query.clone(),
                    error: err.to_string(),
                });
            }
        }
    }
    let summary = Summary::from_values(&q_errors, &latencies, failed, state.model_size());
    Evaluation {
        records,
        skipped,
        summary,
    }
}

/// One `(n, k)` point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bins: usize,
    pub k: usize,
    pub summary: Summary,
}

/// One query at one `(n, k)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRaw {
    pub bins: usize,
    pub k: usize,
    pub line: usize,
    pub estimate: Option<f64>,
    pub truth: Option<u128>,
    pub q_error: Option<f64>,
    pub ratio: Option<f64>,
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub raw: Vec<SweepRaw>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub bins: Vec<usize>,
    pub ks: Vec<usize>,
    pub categorical_threshold: usize,
    /// Each query is timed this many times; the median is kept.
    pub repeats: usize,
    pub options: EstimateOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            bins: vec![20, 50, 100, 200, 400],
            ks: vec![0, 5, 10, 20],
            categorical_threshold: crate::catalog::DEFAULT_CATEGORICAL_THRESHOLD,
            repeats: 3,
            options: EstimateOptions::default(),
        }
    }
}

/// Rebuild the state for every `(n, k)` pair and evaluate the workload on
/// it. Truths are resolved once up front.
pub fn sweep(
    schema: &Schema,
    tables: &BTreeMap<String, TableData>,
    entries: &[WorkloadEntry],
    config: &SweepConfig,
    oracle_cap: Option<usize>,
) -> Result<SweepResult> {
    if config.bins.contains(&0) {
        return Err(Error::InvalidArgument("bin count must be at least 1".into()));
    }
    let oracle = oracle_cap.map(|cap| OracleSource { tables, cap });
    let truths = resolve_truths(schema, entries, oracle);
    let repeats = config.repeats.max(1);
    let mut out = SweepResult::default();
    for &n in &config.bins {
        for &k in &config.ks {
            let build = BuildConfig {
                bin_count: n,
                k,
                categorical_threshold: config.categorical_threshold,
            };
            let state = build_state(schema, tables, build)?;
            let est = Estimator::new(&state, config.options);
            let mut q_errors = Vec::new();
            let mut latencies = Vec::new();
            let mut failed = 0;
            for (e, truth) in entries.iter().zip(&truths) {
                let truth = truth.clone().ok().flatten();
                let mut times = Vec::with_capacity(repeats);
                let mut result = None;
                for _ in 0..repeats {
                    match est.estimate(&e.query) {
                        Ok(r) => {
                            times.push(r.latency_ms);
                            result = Some(Ok(r));
                        }
                        Err(err) => {
                            result = Some(Err(err));
                            break;
                        }
                    }
                }
                let raw = match result.expect("at least one repeat") {
                    Ok(mut r) => {
                        times.sort_by(f64::total_cmp);
                        let latency = times[times.len() / 2];
                        latencies.push(latency);
                        if let Some(t) = truth {
                            r = r.with_truth(t);
                            q_errors.extend(r.q_error);
                        }
                        SweepRaw {
                            bins: n,
                            k,
                            line: e.line,
                            estimate: Some(r.estimate),
                            truth,
                            q_error: r.q_error,
                            ratio: r.ratio,
                            latency_ms: Some(latency),
                        }
                    }
                    Err(_) => {
                        failed += 1;
                        SweepRaw {
                            bins: n,
                            k,
                            line: e.line,
                            estimate: None,
                            truth,
                            q_error: None,
                            ratio: None,
                            latency_ms: None,
                        }
                    }
                };
                out.raw.push(raw);
            }
            out.rows.push(SweepRow {
                bins: n,
                k,
                summary: Summary::from_values(&q_errors, &latencies, failed, state.model_size()),
            });
        }
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        table: "sweep".into(),
        message: e.to_string(),
    }
}

impl SweepResult {
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["bins", "k"];
        header.extend(Summary::CSV_HEADER);
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.bins.to_string(), r.k.to_string()];
            rec.extend(r.summary.csv_fields());
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("sweep summary", e))
    }

    pub fn write_raw_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "bins", "k", "line", "estimate", "truth", "q_error", "ratio", "latency_ms",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        for r in &self.raw {
            out.write_record([
                r.bins.to_string(),
                r.k.to_string(),
                r.line.to_string(),
                opt(r.estimate),
                r.truth.map(|t| t.to_string()).unwrap_or_default(),
                opt(r.q_error),
                opt(r.ratio),
                opt(r.latency_ms),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("sweep raw", e))
    }

    /// Mean latency per `n` (averaged over `k`) in ascending `n`.
    pub fn latency_by_bins(&self) -> Vec<(usize, f64)> {
        self.mean_latency_by(|r| r.bins)
    }

    /// Mean latency per `k` (averaged over `n`) in ascending `k`.
    pub fn latency_by_k(&self) -> Vec<(usize, f64)> {
        self.mean_latency_by(|r| r.k)
    }

    fn mean_latency_by(&self, key: impl Fn(&SweepRow) -> usize) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            if let Some(l) = r.summary.mean_latency_ms {
                let e = acc.entry(key(r)).or_default();
                e.0 += l;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
    }
}
