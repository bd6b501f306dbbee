use thiserror::Error;

use crate::solver::ConvergenceTrace;

/// Errors produced anywhere in the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("grid step mismatch: {0} vs {1}")]
    GridMismatch(f64, f64),

    #[error("time {time} is not on the grid (step {step})")]
    OffGrid { time: f64, step: f64 },

    #[error("time {time} outside [{lower}, {upper}]")]
    OutOfRange { time: f64, lower: f64, upper: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("problem `{problem}` requires parameter `{param}`")]
    MissingParameter { problem: String, param: String },

    #[error("coefficient `{name}` returned a non-finite value during {context}")]
    NonFiniteCoefficient { name: &'static str, context: String },

    #[error("G matrix is not of full rank (smallest singular value {smallest:e})")]
    RankDeficientG { smallest: f64 },

    #[error("forward simulation blew up at step {step} on path {path}")]
    BlowUp { step: usize, path: usize },

    #[error("regression at step {step} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("picard iteration did not converge: {reason}")]
    NotConverged {
        reason: String,
        trace: Box<ConvergenceTrace>,
    },

    #[error("functional must be declared C^{{1,2}} for this operation")]
    SmoothnessRequired,

    #[error("oracle is singular: {0}")]
    SingularOracle(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
