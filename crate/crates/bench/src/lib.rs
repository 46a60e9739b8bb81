//! Shared fixtures for the benchmarks.

use tkhist_core::estimator::synthetic::{djpcd_workload, pure_join_workload};
use tkhist_core::estimator::{generate_synthetic, Layout, SyntheticData, SyntheticSpec};
use tkhist_core::{build_state, BuildConfig, State};

/// A generated dataset, its state and the queries to time against it.
pub struct Fixture {
    pub data: SyntheticData,
    pub state: State,
    pub joins: Vec<String>,
    pub filtered: Vec<String>,
}

/// Five-table users/posts/comments/votes/badges data with correlated
/// attributes, built with `bins` bins and top-`k` containers.
pub fn chain_star(rows: usize, bins: usize, k: usize) -> Fixture {
    let spec = SyntheticSpec::new(Layout::ChainStar, 5, rows, 1.1).correlated(3);
    let data = generate_synthetic(&spec, 7).expect("valid spec");
    let state = build_state(&data.schema, &data.tables, BuildConfig::new(bins, k)).expect("state builds");
    let joins = pure_join_workload(&data.schema);
    let filtered = djpcd_workload(&data, &[10, 100]);
    Fixture {
        data,
        state,
        joins,
        filtered,
    }
}

/// The query joining every table of the fixture.
pub fn widest(queries: &[String]) -> &str {
    queries
        .iter()
        .max_by_key(|q| q.matches(',').count())
        .expect("non-empty workload")
}
