use thiserror::Error;

use crate::bands::BandsError;
use crate::ingest::IngestError;
use crate::initial::InitialError;
use crate::lambda::LambdaError;
use crate::metrics::MetricError;
use crate::mle::MleError;
use crate::model::ModelError;
use crate::simulate::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error, tagged with the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("simulate: {0}")]
    Simulate(#[from] SimError),
    #[error("lambda: {0}")]
    Lambda(#[from] LambdaError),
    #[error("initial: {0}")]
    Initial(#[from] InitialError),
    #[error("mle: {0}")]
    Mle(#[from] MleError),
    #[error("bands: {0}")]
    Bands(#[from] BandsError),
    #[error("metrics: {0}")]
    Metric(#[from] MetricError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse failure classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Numerical,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Numerical => 4,
            ErrorClass::Io => 5,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Io(_) => ErrorClass::Io,
            Error::Ingest(IngestError::Io(_)) | Error::Ingest(IngestError::Csv(_)) => {
                ErrorClass::Io
            }
            Error::Model(_) | Error::Simulate(_) | Error::Ingest(_) => ErrorClass::Validation,
            Error::Initial(InitialError::NoWindow { .. }) => ErrorClass::Validation,
            Error::Lambda(LambdaError::EmptyLowReserveSet) => ErrorClass::Validation,
            Error::Bands(BandsError::TooFewAuctions { .. }) => ErrorClass::Validation,
            Error::Lambda(_)
            | Error::Initial(_)
            | Error::Mle(_)
            | Error::Bands(_)
            | Error::Metric(_) => ErrorClass::Numerical,
        }
    }
}
