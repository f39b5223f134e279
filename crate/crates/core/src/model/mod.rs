//! Problem instances, strategies, and the transition matrices they induce.

mod instance;
pub mod io;
mod strategy;
mod transition;
mod weights;

use thiserror::Error;

pub use instance::{CouplingConstraint, InstanceBuilder, PageControl, Skeleton, Teleportation, WebGraphInstance};
pub use strategy::{ContinuousRow, PageChoice, Strategy};
pub(crate) use transition::distribution_dot;
pub use transition::{build_transition, strategy_from_transition, LinkRow, TransitionMatrix, ROW_TOL};
pub use weights::LinkWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
}

impl ModelError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub(crate) fn invalid_strategy(msg: impl Into<String>) -> Self {
        Self::InvalidStrategy(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

/// Validates an instance, returning the first violated invariant.
pub fn validate(instance: &WebGraphInstance) -> Result<(), ModelError> {
    instance.validate()
}
