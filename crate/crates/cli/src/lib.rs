pub mod config;
pub mod run;

use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_QUALITY: u8 = 3;

/// Failure with its process exit code and a one-line message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: message.into() }
    }

    pub fn quality(message: impl Into<String>) -> Self {
        CliError { code: EXIT_QUALITY, message: message.into() }
    }

    pub fn from_core(e: kettlewatch_core::Error) -> Self {
        if e.is_numerical_quality() {
            CliError::quality(format!("numerical quality: {e}"))
        } else {
            CliError::validation(e.to_string())
        }
    }

    /// Prefixes the message with a JSON pointer into the config.
    pub fn at(mut self, pointer: &str) -> Self {
        self.message = format!("{pointer}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep diagnostics on one line
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}
