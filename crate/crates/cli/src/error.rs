//! Failure type shared by all subcommands, sorted by exit code.

use std::fmt;
use std::path::Path;

use coact_core::{FitError, MetricsError, ParseError, PrepError, SequencerError, TensorError};

/// What went wrong, bucketed the way the process exit code reports it:
/// usage and configuration problems exit 1, unreadable or inconsistent
/// data exits 2, and runtime failures (diverged fits, failing labelers,
/// unwritable outputs) exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    /// Data error for a problem found in a named input file.
    pub fn in_file(path: &Path, err: impl fmt::Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// Runtime error for a failed write to a named output file.
    pub fn writing(path: &Path, err: impl fmt::Display) -> CliError {
        CliError::Runtime(format!("could not write {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            FitError::NonFiniteLoss { .. } => CliError::Runtime(e.to_string()),
            FitError::EmptyTensor { .. } | FitError::ShapeMismatch(_) => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<SequencerError> for CliError {
    fn from(e: SequencerError) -> Self {
        match e {
            SequencerError::LabelerFailure { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PrepError> for CliError {
    fn from(e: PrepError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Unwraps a resolved setting that has no default, or reports which flag
/// or config key would set it.
pub fn required<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Usage(format!(
            "missing required `{key}` (set --{key} or the `{key}` config key)"
        ))
    })
}
