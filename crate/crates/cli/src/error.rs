use std::fmt;
use std::io;
use std::path::Path;
use std::process::ExitCode;

/// Failure of a subcommand, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Input or result rejected (exit 1).
    Invalid(String),
    /// Filesystem trouble (exit 2).
    Io(String),
    /// Flags that parse but make no sense together (exit 3).
    Flags(String),
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn core_at(path: &Path, e: iib_core::Error) -> Self {
        match e {
            iib_core::Error::Io(inner) => CliError::io(path, inner),
            other => CliError::Invalid(format!("{}: {other}", path.display())),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
            CliError::Flags(_) => 3,
        })
    }
}

impl From<iib_core::Error> for CliError {
    fn from(e: iib_core::Error) -> Self {
        match e {
            iib_core::Error::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) | CliError::Flags(m) => f.write_str(m),
        }
    }
}
