use std::io;
use std::path::PathBuf;

use wearlog_core::Error;

use crate::config::ConfigError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: Error },
    #[error("{}: not a saved event log: {message}", path.display())]
    BadLog { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(Error),
    #[error("writing {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::MalformedXml { .. }
        | Error::MalformedRecord { .. }
        | Error::MissingColumn(_)
        | Error::MalformedRow { .. }
        | Error::MalformedIcs { .. }
        | Error::Csv(_) => EXIT_PARSE,
        Error::UnknownAttribute(_) | Error::InvalidPredicate { .. } | Error::InvalidPattern(_) | Error::InvalidFixture(_) => {
            EXIT_CONFIG
        }
        Error::Io(_) | Error::SinkWrite(_) => EXIT_IO,
        Error::InvalidInterval { .. } | Error::UnsortedInput { .. } => EXIT_INTERNAL,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Input { source, .. } | CliError::Pipeline(source) => core_exit_code(source),
            CliError::BadLog { .. } => EXIT_PARSE,
            CliError::Output { .. } => EXIT_IO,
        }
    }
}

pub fn output_error(path: impl Into<PathBuf>, e: Error) -> CliError {
    let source = match e {
        Error::SinkWrite(io) | Error::Io(io) => io,
        other => io::Error::other(other.to_string()),
    };
    CliError::Output { path: path.into(), source }
}
