use std::fmt;

use dclab::Error;

/// Failure classes of a run, each with its own exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// The configuration is unreadable, malformed or outside the admissible range.
    Config(String),
    /// A computation failed to converge or produced non-finite values.
    Numerical(String),
    /// Writing the outputs failed.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Numerical(_) => "numerical_failure",
            CliError::Io(_) => "io_error",
        }
    }

    /// Classifies a library error raised while computing `context`.
    pub fn from_lib(context: &str, e: Error) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            Error::NoConvergence { .. } | Error::NonFinite(_) | Error::Degenerate(_) => CliError::Numerical(msg),
            Error::Io(_) => CliError::Io(msg),
            Error::OutsideDomain { .. }
            | Error::InvalidDomain(_)
            | Error::InvalidParams(_)
            | Error::ShapeMismatch { .. }
            | Error::Precondition(_)
            | Error::CostGuard(_)
            | Error::Json(_)
            | Error::Format(_) => CliError::Config(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

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
