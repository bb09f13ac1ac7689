use thiserror::Error;

use crate::grid::Field;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Best iterate handed back when an inner solve stops early.
#[derive(Debug, Clone)]
pub struct Unconverged {
    pub primal: Field,
    pub dual: Field,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite evaluation: {0}")]
    Eval(String),
    #[error("step size {tau} exceeds the unique-minimizer bound tau_max = {tau_max}")]
    StepSizeTooLarge { tau: f64, tau_max: f64 },
    #[error("inner solver stopped after {} iterations with gap {:.3e}", .0.iterations, .0.gap)]
    MaxIterExceeded(Box<Unconverged>),
    #[error("non-finite iterate after {iterations} iterations")]
    NonFiniteIterate { iterations: usize },
    #[error("inner solver failed: {0}")]
    InnerSolverFailed(Box<Error>),
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),
}

impl Error {
    pub(crate) fn eval(what: impl Into<String>) -> Self {
        Error::Eval(what.into())
    }

    pub(crate) fn config(what: impl Into<String>) -> Self {
        Error::Config(what.into())
    }
}
