use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which side of a join was out of order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinSide {
    Intervals,
    Points,
}

impl std::fmt::Display for JoinSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JoinSide::Intervals => f.write_str("intervals"),
            JoinSide::Points => f.write_str("points"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("interval end {end} precedes start {start}")]
    InvalidInterval { start: String, end: String },

    #[error("{side} are not sorted ascending at index {index}")]
    UnsortedInput { side: JoinSide, index: usize },

    #[error("malformed XML at byte {position}: {message}")]
    MalformedXml { position: u64, message: String },

    #[error("malformed health record #{record}: {message}")]
    MalformedRecord { record: usize, message: String },

    #[error("calendar table is missing column {0:?}")]
    MissingColumn(String),

    #[error("malformed calendar row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("malformed iCalendar data at line {line}: {message}")]
    MalformedIcs { line: usize, message: String },

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("invalid cohort predicate {clause:?}: {message}")]
    InvalidPredicate { clause: String, message: String },

    #[error("invalid pattern: {0}")]
    InvalidPattern(#[from] regex::Error),

    #[error("invalid fixture spec: {0}")]
    InvalidFixture(String),

    #[error("failed to write output: {0}")]
    SinkWrite(#[source] io::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
