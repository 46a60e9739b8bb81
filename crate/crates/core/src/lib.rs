//! Join cardinality estimation with top-k augmented equi-width histograms.
//!
//! Every join key gets an equi-width histogram whose bins keep the exact
//! frequencies of their `k` most frequent keys next to summary counts of
//! the remaining background keys. Star joins are estimated bin by bin,
//! chains are composed through key-by-key grids, filters are applied with
//! key-by-attribute grids, and dominant keys known to be incompatible with
//! a query's filters are dropped before joining.
//!
//! ```no_run
//! use tkhist_core::{build_state, estimate, ingest_all, load_schema, BuildConfig, EstimateOptions};
//!
//! let schema = load_schema("data/schema.json")?;
//! let tables = ingest_all(&schema)?;
//! let state = build_state(&schema, &tables, BuildConfig::default())?;
//! let report = estimate(
//!     "SELECT COUNT(*) FROM users u, posts p WHERE u.Id = p.OwnerUserId",
//!     Some(&state),
//!     EstimateOptions::default(),
//! )?;
//! println!("{}", report.estimate);
//! # Ok::<(), tkhist_core::Error>(())
//! ```

pub mod catalog;
pub mod djpcd;
pub mod error;
pub mod estimator;
pub mod hist;
pub mod join;
pub mod pipeline;
pub mod predicate;
pub mod query;
pub mod state;

mod serde_util;

pub use catalog::{
    ingest_all, ingest_reader, ingest_table, load_schema, ColumnClass, ColumnData, KeyDomain,
    QualifiedColumn, Schema, TableData, TableDef,
};
pub use djpcd::{CorrelationMap, Envelope, EnvelopeMode, ExclusionSet};
pub use error::{Error, Result};
pub use estimator::{estimate, EstimationReport, Estimator, Summary};
pub use hist::{AttrValue, EquiWidthBins, TkHist1D, TkHist2D};
pub use join::{jtkh_join, selinger_bin_estimate, CompositeHist};
pub use pipeline::{
    estimate_planned, estimate_pure_join, estimate_with_djpcd, EstimateOptions, PlannedQuery,
};
pub use predicate::{Predicate, PredicateOp};
pub use query::{parse_query, ColumnRef, Query, SubQueryPlan};
pub use state::{
    apply_update, build_state, load_state, save_state, BuildConfig, State, UpdateReport,
};
