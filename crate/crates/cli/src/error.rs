use std::fmt;

use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// IO failures, malformed files, failed invariant checks.
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    /// Epsilon exceeded or a logarithm at the branch cut.
    pub const HYPOTHESIS: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Hypothesis(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::NonConvergence(_) => exit::NON_CONVERGENCE,
            CliError::Hypothesis(_) => exit::HYPOTHESIS,
            CliError::Io(_) | CliError::Domain(_) => exit::FAILURE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::NonConvergence(_) => "non_convergence",
            CliError::Hypothesis(_) => "hypothesis_violation",
            CliError::Domain(_) => "domain",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

impl From<ymr_core::Error> for CliError {
    fn from(e: ymr_core::Error) -> Self {
        use ymr_core::Error as E;
        let msg = e.to_string();
        match e {
            E::NotConverged { .. } => CliError::NonConvergence(msg),
            E::BranchCut(_) | E::InterpolationBranchCut { .. } | E::HypothesisViolated(_) | E::NotGaugeFixed { .. } => {
                CliError::Hypothesis(msg)
            }
            E::GroupMismatch { .. } => CliError::Config(msg),
            E::Io(_) | E::Format(_) => CliError::Io(msg),
            _ => CliError::Domain(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Machine-readable error written to `error.json` and stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl fmt::Display for ErrorRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}
