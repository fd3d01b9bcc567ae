use thiserror::Error;

/// Errors produced while building chains or running computations on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("kernel {time} row {row}: row sum {sum} ≠ 1 (deficit {deficit:e})")]
    NonStochasticRow {
        time: usize,
        row: usize,
        sum: f64,
        deficit: f64,
    },

    #[error("kernel {time} row {row} column {col}: negative entry {value}")]
    NegativeEntry {
        time: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("initial law sums to {sum} ≠ 1 or has a negative entry")]
    InitialLaw { sum: f64 },

    #[error("observable at time {time}, state {state}: |value| = {value} exceeds declared bound L = {bound}")]
    BoundViolation {
        time: usize,
        state: usize,
        value: f64,
        bound: f64,
    },

    #[error("time index {requested} outside the addressable horizon 1..={horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("invalid time index: {0}")]
    InvalidTime(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what}: enumeration size {size} exceeds cap {cap}{hint}")]
    EnumerationCap {
        what: &'static str,
        size: u128,
        cap: u128,
        hint: &'static str,
    },

    #[error("support overflow: exact sum law needs more than {cap} atoms")]
    SupportOverflow { cap: usize },

    #[error("no exponential envelope: fitted rate δ = {delta} is not below 1")]
    NoEnvelope { delta: f64 },

    #[error("variance starved at index {index}: block starting at {index} does not reach variance {target} by horizon {horizon}")]
    VarianceStarved {
        index: usize,
        target: f64,
        horizon: usize,
    },

    #[error("covariance matrix not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("cannot standardize: exact variance is zero at n = {n}")]
    DegenerateVariance { n: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed chain document: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl Error {
    /// Process exit code: 2 for bad input, 4 when a construction cannot be completed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::VarianceStarved { .. }
            | Error::NoEnvelope { .. }
            | Error::NotPsd { .. }
            | Error::DegenerateVariance { .. } => 4,
            Error::Dimension(_)
            | Error::NonStochasticRow { .. }
            | Error::NegativeEntry { .. }
            | Error::InitialLaw { .. }
            | Error::BoundViolation { .. }
            | Error::HorizonExceeded { .. }
            | Error::InvalidTime(_)
            | Error::InvalidParameter { .. }
            | Error::EnumerationCap { .. }
            | Error::SupportOverflow { .. }
            | Error::Io { .. }
            | Error::Json(_) => 2,
        }
    }
}
