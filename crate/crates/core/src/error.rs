use std::path::PathBuf;

use thiserror::Error;

/// Errors raised when constructing or evaluating model primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{field}: {rule}")]
    Invalid { field: &'static str, rule: String },
    #[error("{what} = {value} lies outside [{lower}, {upper}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("output index {index} out of range for a grid of {len} points")]
    IndexOutOfRange { index: usize, len: usize },
}

impl ModelError {
    pub(crate) fn invalid(field: &'static str, rule: impl Into<String>) -> Self {
        ModelError::Invalid {
            field,
            rule: rule.into(),
        }
    }
}

/// Errors from the contract solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("value iteration did not converge in {iterations} iterations (last sup-norm change {last_delta:e})")]
    NotConverged {
        iterations: usize,
        last_delta: f64,
        history: Vec<f64>,
    },
    #[error("no promised value on the grid is deliverable")]
    EmptyDomain,
    #[error("feasible promised values are not contiguous on the grid (gap at index {index})")]
    NonContiguousDomain { index: usize },
    #[error("invalid solver setting {field}: {rule}")]
    Config { field: &'static str, rule: String },
}

/// Errors from forward simulation of a solved contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("initial promised value {v0} outside the feasible interval [{lower}, {upper}]")]
    InfeasibleStart { v0: f64, lower: f64, upper: f64 },
    #[error("need at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
}

/// Errors from the price-competition game.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("{field}: {rule}")]
    Invalid { field: &'static str, rule: String },
    #[error("price vector must be positive and finite, got {0:?}")]
    BadPrices(Vec<f64>),
    #[error("best-response iteration did not converge in {iterations} iterations (last change {last_change:e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        trace: Vec<f64>,
    },
}

/// Errors from configuration loading and command orchestration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {rule}")]
    Invalid { field: String, rule: String },
    #[error("unknown key `{key}` in [{section}]{hint}")]
    UnknownKey {
        section: String,
        key: String,
        hint: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
