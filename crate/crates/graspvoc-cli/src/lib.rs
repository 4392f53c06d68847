//! Command implementations for the `graspvoc` binary.
//!
//! Every command reads and writes plain files so each pipeline stage is
//! independently replayable. Exit codes are stable: 0 ok, 1 I/O, 2
//! provider failure, 3 validation failure, 4 no compatible grasp.

use thiserror::Error;

pub mod commands;
pub mod demo;
pub mod manifest;

pub use commands::{
    run_condition, run_eval, run_pipeline, run_rank, run_segment, ConditionArgs, EvalArgs,
    PipelineArgs, RankArgs, SegmentArgs,
};
pub use demo::{run_demo, DemoArgs};

/// Command failure carrying its documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("no grasp is compatible with the task (rerun with --fallback-max-force to accept the max-force grasp)")]
    NoCompatibleGrasp,
    #[error("{failed} of {total} pipeline tasks failed")]
    EntriesFailed {
        failed: usize,
        total: usize,
        first_code: i32,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Provider(_) => 2,
            CliError::Validation(_) => 3,
            CliError::NoCompatibleGrasp => 4,
            CliError::EntriesFailed { first_code, .. } => *first_code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<graspvoc::geometry::io::CloudIoError> for CliError {
    fn from(e: graspvoc::geometry::io::CloudIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<graspvoc::providers::ProviderError> for CliError {
    fn from(e: graspvoc::providers::ProviderError) -> Self {
        use graspvoc::providers::ProviderError as P;
        match e {
            P::UnknownLabel(_) | P::InvalidRequest(_) => CliError::Validation(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<graspvoc::object_model::VocabError> for CliError {
    fn from(e: graspvoc::object_model::VocabError) -> Self {
        use graspvoc::object_model::VocabError as V;
        match e {
            V::Io(_) | V::BadFile(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<graspvoc::pipeline::PipelineError> for CliError {
    fn from(e: graspvoc::pipeline::PipelineError) -> Self {
        use graspvoc::pipeline::PipelineError as P;
        match e {
            P::Provider(inner) => inner.into(),
            P::Vocab(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<graspvoc::scoring::ScoringError> for CliError {
    fn from(e: graspvoc::scoring::ScoringError) -> Self {
        use graspvoc::scoring::ScoringError as S;
        match e {
            S::NoCompatibleGrasp => CliError::NoCompatibleGrasp,
            S::Io(_) | S::BadFile(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<graspvoc::evaluation::EvalError> for CliError {
    fn from(e: graspvoc::evaluation::EvalError) -> Self {
        use graspvoc::evaluation::EvalError as E;
        match e {
            E::Io(_) | E::BadFile(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<graspvoc::synth::SynthError> for CliError {
    fn from(e: graspvoc::synth::SynthError) -> Self {
        use graspvoc::synth::SynthError as S;
        match e {
            S::Provider(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(
    path: &std::path::Path,
) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: serde::Serialize>(
    path: &std::path::Path,
    value: &T,
) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}
