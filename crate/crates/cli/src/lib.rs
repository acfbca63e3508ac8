//! Orchestration of the full speaker-code pipeline: corpus generation,
//! staged training, evaluation reports and plot data.

pub mod config;
pub mod pipeline;
pub mod report;

use thiserror::Error;

pub use config::RunConfig;
pub use pipeline::{Pipeline, PlotKind, Stage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("missing artifact: {0}")]
    Missing(String),

    #[error(transparent)]
    Model(#[from] svcnet::Error),
}

impl PipelineError {
    /// 1 for usage errors, 2 for data and model errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Missing(_) | PipelineError::Model(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
