use thiserror::Error;

use crate::neuralerr::TrainHistory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A state became non-finite during time stepping.
    #[error("integration blew up at step {step}")]
    Blowup { step: usize },

    #[error("insufficient samples: need at least {required}, got {actual}")]
    InsufficientSamples { required: usize, actual: usize },

    #[error(
        "matrix is not positive semi-definite (min eigenvalue {min_eig:e}); run ensure_psd first"
    )]
    NotPsd { min_eig: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{which} covariance is singular and cannot be regularized")]
    RegularizationRequired { which: &'static str },

    #[error("trajectory does not match model: {0}")]
    TrajectoryMismatch(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize, history: TrainHistory },

    #[error("cycling aborted at window {window}: {source}")]
    CyclingDiverged {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("lead {lead} exceeds the archived truth span ({available} windows)")]
    LeadOutOfRange { lead: usize, available: usize },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual })
        }
    }
}
