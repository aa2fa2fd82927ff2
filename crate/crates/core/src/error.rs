//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty sample set: {0}")]
    EmptySamples(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The tightened target Type-I constraint has no room: `alpha - eps_0T <= 0`.
    #[error("sizing error: alpha - eps_0T = {margin:.6} <= 0; increase n_0T or alpha")]
    Sizing { margin: f64 },

    /// The feasibility probe could not reach `g <= -xi`.
    #[error("infeasible constraint: best value {best_value:.3e} > -xi = {target:.3e}")]
    InfeasibleConstraint {
        best: Vec<f64>,
        best_value: f64,
        target: f64,
    },

    #[error("numerical failure at iteration {iteration}: {what}")]
    Numerical { iteration: usize, what: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A pipeline stage failed; `hint` suggests a remedy when one is known.
    #[error("{stage} failed: {source}{hint}")]
    Stage {
        stage: String,
        hint: String,
        #[source]
        source: Box<Error>,
    },

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from invalid configuration rather than a run failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Sizing { .. } | Error::Domain(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &str, hint: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            hint: hint.to_string(),
            source: Box::new(self),
        }
    }
}
