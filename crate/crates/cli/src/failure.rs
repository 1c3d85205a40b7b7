use std::fmt;

use lidar_aug_core::Error;

/// A command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 1).
    Config(String),
    /// Unreadable, malformed or inconsistent data (exit 2).
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter { .. } => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
