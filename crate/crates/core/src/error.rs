//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Where a parse error was detected in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseLocation {
    /// Byte offset into a binary stream.
    Offset(usize),
    /// 1-based line number of a text stream.
    Line(usize),
    /// Input ended before the expected content.
    End,
}

impl fmt::Display for ParseLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseLocation::Offset(o) => write!(f, "offset {o}"),
            ParseLocation::Line(l) => write!(f, "line {l}"),
            ParseLocation::End => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape mismatch or empty operand.
    Dimension(String),
    /// A computation produced or met a non-finite value.
    NonFinite(String),
    /// An argument violates its documented range.
    InvalidArgument(String),
    /// Malformed input data.
    Parse { at: ParseLocation, message: String },
    /// Training diverged or could not proceed.
    Training { epoch: usize, batch: usize, message: String },
    /// Operation not defined for this configuration.
    Unsupported(String),
}

impl Error {
    pub(crate) fn parse(at: ParseLocation, message: impl Into<String>) -> Self {
        Error::Parse { at, message: message.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Parse { at, message } => write!(f, "parse error at {at}: {message}"),
            Error::Training { epoch, batch, message } => {
                write!(f, "training failed at epoch {epoch}, batch {batch}: {message}")
            }
            Error::Unsupported(m) => write!(f, "unsupported: {m}"),
        }
    }
}

impl core::error::Error for Error {}
