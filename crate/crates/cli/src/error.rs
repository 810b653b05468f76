use thiserror::Error;

/// Failure classes mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("certification: {0}")]
    Certification(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Certification(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<nlre_core::Error> for CliError {
    fn from(e: nlre_core::Error) -> CliError {
        if e.is_certification() {
            CliError::Certification(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
