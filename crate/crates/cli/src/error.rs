use std::fmt;

use tracelens_core::Error as CoreError;

/// Failure of a pipeline run, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Data or parameters violate an operation's preconditions. Exit 1.
    Domain(String),
    /// Bad configuration, missing or malformed files. Exit 2.
    Config(String),
    /// Reading or writing failed. Exit 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Domain(_) => "domain",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Domain(m) | CliError::Config(m) | CliError::Io(m) => m,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Domain(m) => CliError::Domain(format!("{what}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            e if e.is_domain() => CliError::Domain(e.to_string()),
            CoreError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
