use std::fmt::Display;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or inputs, detected before any output is written.
    #[error("{0}")]
    Invalid(String),
    /// Failure while doing the work.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

/// Tags an error with the phase it happened in.
pub trait Phase<T> {
    fn invalid(self) -> CliResult<T>;
    fn failed(self) -> CliResult<T>;
}

impl<T, E: Display> Phase<T> for Result<T, E> {
    fn invalid(self) -> CliResult<T> {
        self.map_err(|e| CliError::Invalid(e.to_string()))
    }

    fn failed(self) -> CliResult<T> {
        self.map_err(|e| CliError::Failed(e.to_string()))
    }
}
