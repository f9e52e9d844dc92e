//! Library surface of the `dctr` binary, exposed so integration tests can
//! drive the exact command implementations.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_index, cmd_ingest, cmd_retrieve, cmd_stats, configure_jobs,
    prepare_engine, read_output_files,
};
pub use config::EngineConfig;

/// Command failure, split by exit code: validation and usage problems exit
/// with 2, runtime failures with 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dctr_core::IndexError> for CliError {
    fn from(err: dctr_core::IndexError) -> Self {
        match err {
            dctr_core::IndexError::Format(_) | dctr_core::IndexError::Usage(_) => {
                CliError::Validation(err.to_string())
            }
            dctr_core::IndexError::Embed(_) => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<dctr_core::RetrievalError> for CliError {
    fn from(err: dctr_core::RetrievalError) -> Self {
        match err {
            dctr_core::RetrievalError::Usage(_) => CliError::Validation(err.to_string()),
            dctr_core::RetrievalError::Index(inner) => inner.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<dctr_core::EvalError> for CliError {
    fn from(err: dctr_core::EvalError) -> Self {
        match err {
            dctr_core::EvalError::Usage(_) => CliError::Validation(err.to_string()),
            dctr_core::EvalError::Retrieval(inner) => inner.into(),
        }
    }
}
