use std::process::ExitCode;

use annulus::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed command line or configuration.
    Parse(String),
    /// Physically inconsistent geometry or simulation settings.
    Physics(String),
    Numerical(String),
    /// Analytic and simulated responses disagree beyond the threshold.
    ComparisonFailed(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Parse(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::ComparisonFailed(_) => 5,
            CliError::Io(_) => 6,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "configuration error: {m}"),
            CliError::Physics(m) => write!(f, "invalid setup: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::ComparisonFailed(m) => write!(f, "comparison failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parse(_) => CliError::Parse(msg),
            Error::Domain(_) | Error::Config(_) => CliError::Physics(msg),
            Error::Io(_) => CliError::Io(msg),
            Error::IncompleteEnumeration { .. }
            | Error::RootQuality { .. }
            | Error::NotCertified { .. }
            | Error::TruncationUnreachable { .. }
            | Error::Numerical(_) => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
