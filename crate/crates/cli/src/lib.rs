//! Library side of the command-line front end: config parsing, exports,
//! snapshots, the gradient-check suite and sweep orchestration. The
//! `afshape` binary is a thin dispatcher over [`commands`].

use std::fmt;

pub mod commands;
pub mod config_file;
pub mod export;
pub mod gradcheck;
pub mod snapshot;
pub mod sweep;

/// CLI-level error classification; maps onto process exit codes
/// (usage 1, validation 2, runtime 3, gradcheck failure 4).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub(crate) fn core_runtime(e: afshape_core::Error) -> CliError {
    use afshape_core::Error as E;
    match e {
        E::Validation { .. }
        | E::InvalidAlphabet(_)
        | E::GridBounds(_)
        | E::InvalidTarget(_)
        | E::BudgetExceeded { .. } => CliError::Validation(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}
