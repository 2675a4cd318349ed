//! Command-line front end for `sudest-core`: argument and config-file
//! resolution, the subcommands, output writers and the verification suite.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod verify;

use std::fmt;

/// Exit status of a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// A certification or verification check did not pass.
    Failed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Failed => 1,
        }
    }
}

/// Bad flags, config values or inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage-class failures (including library input validation), 1 otherwise.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    use sudest_core::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::Validation(_) | E::DimensionMismatch(_) | E::UnsupportedDimension { .. } | E::Unsupported(_)) => 2,
        _ => 1,
    }
}
