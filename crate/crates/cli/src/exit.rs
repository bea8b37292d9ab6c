//! Process outcome and error-to-exit-code mapping.
//!
//! The contract: `0` success (and converged synthesis), `2` invalid input of
//! any kind, `3` non-convergence (artifacts are still written), `1` failed
//! `check` audits. Clap's own usage errors also exit with `2`.

use std::fmt;

/// Terminal state of a successfully dispatched command.
pub enum Outcome {
    Success,
    /// Synthesis finished without meeting its convergence criterion; all
    /// artifacts were written.
    NonConverged,
    /// One or more `check` audits failed; the report was still printed.
    ChecksFailed,
}

impl Outcome {
    pub fn code(&self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ChecksFailed => 1,
            Outcome::NonConverged => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.message.fmt(f)
    }
}

impl From<repgeo::Error> for CliError {
    fn from(e: repgeo::Error) -> Self {
        let code = match &e {
            // A hard divergence gives up mid-computation, so unlike the
            // status-based non-convergence path there may be no artifacts.
            repgeo::Error::Diverged(_) => 3,
            _ => 2,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            message: e.to_string(),
            code: 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            message: format!("malformed JSON: {e}"),
            code: 2,
        }
    }
}

/// Invalid-input error (exit 2) with a plain message.
pub fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        message: message.into(),
        code: 2,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
