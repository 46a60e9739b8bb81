use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse schema document: {0}")]
    SchemaParse(String),

    #[error("dangling foreign key: {0}")]
    DanglingForeignKey(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("cyclic join template: {0}")]
    CyclicTemplate(String),

    #[error("table {table}: missing column {column}")]
    MissingColumn { table: String, column: String },

    #[error("table {table}, row {row}, column {column}: cannot parse {value:?} as {kind}")]
    BadCell {
        table: String,
        row: usize,
        column: String,
        value: String,
        kind: &'static str,
    },

    #[error("csv error in {table}: {message}")]
    Csv { table: String, message: String },

    #[error("value {value} outside key domain {domain} [{min}, {max}]")]
    OutOfDomain {
        domain: String,
        value: i64,
        min: f64,
        max: f64,
    },

    #[error("bin index {index} out of range (histogram has {bins} bins)")]
    BinOutOfRange { index: usize, bins: usize },

    #[error("column lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("key domain mismatch: {left} vs {right}")]
    DomainMismatch { left: String, right: String },

    #[error("predicate on {predicate} does not match histogram column {histogram}")]
    PredicateColumnMismatch { predicate: String, histogram: String },

    #[error("unsupported predicate: {0}")]
    UnsupportedPredicate(String),

    #[error("missing histogram: {0}")]
    MissingHistogram(String),

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unsupported SQL feature: {0}")]
    Unsupported(String),

    #[error("unknown table or alias: {0}")]
    UnknownTable(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("ambiguous column: {0}")]
    AmbiguousColumn(String),

    #[error("cyclic join detected: {0}")]
    CyclicJoin(String),

    #[error("disconnected join graph: {0}")]
    DisconnectedJoin(String),

    #[error("unrecognized state file")]
    UnrecognizedState,

    #[error("state file version {found} is not supported (expected {expected})")]
    StateVersion { found: u32, expected: u32 },

    #[error("corrupt state file: {0}")]
    CorruptState(String),

    #[error("state not built")]
    StateNotBuilt,

    #[error("oracle intermediate result exceeded cap of {cap} tuples")]
    OracleCapExceeded { cap: usize },

    #[error("true cardinality is zero; q-error and ratio are undefined")]
    UndefinedTruth,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
