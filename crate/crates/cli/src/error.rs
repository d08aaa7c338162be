use lcs_core::Error;
use thiserror::Error as ThisError;

/// Failure categories of a pipeline run, each with its own exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Wraps a core error, prefixing `context` (usually a path or stage name).
    pub fn from_core(context: &str, e: Error) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            Error::Io(_) | Error::BadMagic { .. } | Error::MalformedHeader(_) | Error::ShapeMismatch(_) | Error::NonMonotoneTime { .. } | Error::Json(_) => {
                CliError::Io(msg)
            }
            Error::InvalidArgument(_) | Error::EmptyBand { .. } => CliError::Config(msg),
            Error::OutOfDomain { .. }
            | Error::DomainExit { .. }
            | Error::StepUnderflow { .. }
            | Error::TooManySteps(_)
            | Error::SingularMatrix
            | Error::NonFinite(_)
            | Error::BlowUp { .. } => CliError::Numerical(msg),
        }
    }
}
