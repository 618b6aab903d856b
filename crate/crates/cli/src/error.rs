use std::path::PathBuf;

use har_core::dataset::DatasetError;
use har_core::eval::EvalError;
use har_core::llm::LlmError;
use har_core::pipeline::{FileError, PipelineError};

/// Exit status for domain failures: invalid data, unusable completions,
/// too many failed episodes.
pub const EXIT_DOMAIN: i32 = 1;
/// Exit status for usage and parse failures: bad flags, unreadable inputs.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{stage}: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: PipelineError,
    },
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Input(#[from] FileError),
    #[error("backend: {0}")]
    Backend(#[from] LlmError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Input(_) => EXIT_USAGE,
            CliError::Dataset(DatasetError::Validation(_)) => EXIT_DOMAIN,
            CliError::Dataset(_) => EXIT_USAGE,
            CliError::Pipeline {
                source: PipelineError::Config(_) | PipelineError::Prompt(_),
                ..
            } => EXIT_USAGE,
            CliError::Pipeline { .. } => EXIT_DOMAIN,
            CliError::Eval(_) => EXIT_DOMAIN,
            CliError::Backend(LlmError::Replay(_)) => EXIT_USAGE,
            CliError::Backend(_) => EXIT_DOMAIN,
            CliError::Output { .. } => EXIT_DOMAIN,
        }
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(PipelineError) -> CliError {
        move |source| CliError::Pipeline { stage, source }
    }

    pub(crate) fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Output { path, source }
    }

    /// Failures while writing one of our own output files.
    pub(crate) fn written(e: FileError) -> CliError {
        match e {
            FileError::Io { path, source } => CliError::Output { path, source },
            other => CliError::Input(other),
        }
    }
}
