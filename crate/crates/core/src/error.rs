use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate report for {governorate} on {date}")]
    DuplicateReport {
        governorate: String,
        date: NaiveDate,
    },

    #[error("duplicate rainfall observation for cell ({lat}, {lon}) on {date}")]
    DuplicateObservation { lat: f64, lon: f64, date: NaiveDate },

    #[error("coordinate ({lat}, {lon}) is not on the 0.25 degree lattice")]
    OffLattice { lat: f64, lon: f64 },

    #[error("rainfall cell ({lat}, {lon}) has no entry in the grid map")]
    UnmappedCell { lat: f64, lon: f64 },

    #[error("adjacency is not symmetric: {from} lists {to} but not vice versa")]
    AsymmetricAdjacency { from: String, to: String },

    #[error("governorate {0} lists itself as a neighbor")]
    SelfNeighbor(String),

    #[error("governorate {0} defined more than once")]
    DuplicateGovernorate(String),

    #[error("governorate {id} has non-positive population {population}")]
    NonPositivePopulation { id: String, population: i64 },

    #[error("governorate {id} referenced in {context} is not in the registry")]
    UnknownGovernorate { id: String, context: String },

    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{governorate}: need at least 2 cumulative reports, found {found}")]
    InsufficientReports { governorate: String, found: usize },

    #[error("report intervals are not contiguous at {date}")]
    NonContiguousIntervals { date: NaiveDate },

    #[error("{governorate}: no {series} value for {date}")]
    MissingData {
        governorate: String,
        series: String,
        date: NaiveDate,
    },

    #[error("{governorate}: label window for anchor {anchor} runs past the last data day")]
    InsufficientFuture {
        governorate: String,
        anchor: NaiveDate,
    },

    #[error("no sample survived panel assembly")]
    EmptyPanel,

    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),

    #[error("bad feature descriptor `{0}`")]
    BadDescriptor(String),

    #[error("statistic window is empty")]
    EmptyWindow,

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("binary feature splits the samples into an empty group")]
    DegenerateGroups,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("fold {fold} has an empty {part} set")]
    EmptyFold { fold: usize, part: &'static str },

    #[error("invalid fold schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),

    #[error("every tuning trial failed")]
    AllTrialsFailed,

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code for this failure: 1 for configuration misuse,
    /// 2 for bad input data, 3 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 1,
            Error::InvalidParams(_)
            | Error::InvalidSearchSpace(_)
            | Error::AllTrialsFailed
            | Error::ModelFormat { .. } => 3,
            _ => 2,
        }
    }
}
