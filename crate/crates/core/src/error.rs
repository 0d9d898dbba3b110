use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component index {index} out of range for {len} functions")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} is not valid for {loss} loss")]
    InvalidLabel { label: f64, loss: &'static str },

    #[error("strong convexity unavailable: lambda must be positive")]
    StrongConvexityUnavailable,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cannot split {n} functions across {m} machines")]
    TooManyMachines { n: usize, m: usize },

    #[error("capacity exceeded: {reason}")]
    CapacityExceeded { reason: String },

    #[error("step length {eta} must lie in (0, 1/(4L)) = (0, {limit})")]
    InvalidStep { eta: f64, limit: f64 },

    #[error("contraction rate {rate} is not below 1")]
    NoConvergence { rate: f64 },

    #[error("sample budget exhausted after {taken} of {requested} steps")]
    SampleBudgetExhausted { taken: usize, requested: usize },

    #[error("machine {machine} accessed non-resident function {index}")]
    AccessViolation { machine: usize, index: usize },

    #[error("function subset must be a strict subset of [k]")]
    NotStrictSubset,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 for configuration and input errors, 2 for violated runtime contracts
    /// (capacity, sample budget, access guard), 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::CapacityExceeded { .. }
            | Error::SampleBudgetExhausted { .. }
            | Error::AccessViolation { .. }
            | Error::NoConvergence { .. } => 2,
            _ => 1,
        }
    }
}
