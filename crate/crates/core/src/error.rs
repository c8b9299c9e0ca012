use std::path::PathBuf;

use thiserror::Error;

use crate::problem::SolveResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem does not supply a potential")]
    MissingPotential,

    #[error("problem does not supply a jacobian")]
    MissingJacobian,

    #[error("problem does not supply an exact solution")]
    MissingExact,

    #[error("non-finite value produced at t = {t}")]
    Divergence { t: f64 },

    #[error(
        "inner solve failed at step {step}, stage {stage}: {iterations} iterations, last increment {last_increment:e}"
    )]
    InnerNotConverged {
        step: usize,
        stage: usize,
        iterations: usize,
        last_increment: f64,
    },

    #[error("singular jacobian in newton iteration")]
    SingularJacobian,

    #[error("scheme needs {need} history states, {have} available")]
    InsufficientHistory { need: usize, have: usize },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded {
        t: f64,
        max_steps: usize,
        partial: Box<SolveResult>,
    },

    #[error("step size pinned at s_min = {step:e} with error {err:e} above tolerance at t = {t}")]
    StiffnessFailure {
        t: f64,
        step: f64,
        err: f64,
        partial: Box<SolveResult>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("could not parse {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    /// True for errors caused by bad user input rather than a failed solve.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::DimensionMismatch { .. }
                | Error::MissingPotential
                | Error::MissingJacobian
                | Error::MissingExact
                | Error::Parse { .. }
        )
    }
}
