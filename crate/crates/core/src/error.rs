use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, CaaError>;

/// Errors raised by the estimation pipeline.
///
/// Step, state, observation and action indices in messages are 1-based.
#[derive(Debug, Error)]
pub enum CaaError {
    #[error("model validation failed: {0}")]
    Validation(ValidationReport),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("observation {observation} has zero likelihood under the predicted belief")]
    ImpossibleObservation { observation: usize },

    #[error("action {action} at step {step} is impossible under the model")]
    InconsistentAction { step: usize, action: usize },

    #[error("evidence at step {step} has zero total likelihood")]
    InconsistentEvidence { step: usize },

    #[error("enumeration of {sequences} observation sequences exceeds the cap of {cap}")]
    EnumerationTooLarge { sequences: u128, cap: u64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CaaError {
    /// True for errors caused by data that contradicts the model or fails
    /// validation, as opposed to I/O problems.
    pub fn is_evidence_or_validation(&self) -> bool {
        !matches!(self, CaaError::Io(_))
    }
}
