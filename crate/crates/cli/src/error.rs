use std::fmt;

use youngbsde::Error;

/// Failure of a run, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Precondition(String),
    Numerical(String),
    /// Outputs were written, but an iteration did not reach its tolerance.
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::NonConvergence(_) => 5,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Precondition(_) => "precondition",
            CliError::Numerical(_) => "numerical",
            CliError::NonConvergence(_) => "non-convergence",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Precondition(m) | CliError::Numerical(m) | CliError::NonConvergence(m) | CliError::Io(m) => m,
        }
    }

    /// One JSON object for standard error.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "level": "error", "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(m) | Error::Contract(m) => CliError::Precondition(m),
            Error::Numerical(m) | Error::Resource(m) => CliError::Numerical(m),
            Error::Parse(m) => CliError::Config(m),
            Error::Io(e) => CliError::Io(e.to_string()),
            Error::Csv(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
