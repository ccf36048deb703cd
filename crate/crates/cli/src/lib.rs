//! File formats, reports, threaded analysis runners and command
//! implementations around the `cae-core` crate.

pub mod formats;
pub mod io;
pub mod parallel;
pub mod reports;
pub mod run;
pub mod verify;

/// Version stamp of every JSON artifact this crate reads or writes.
pub const FORMAT_VERSION: u32 = 1;

/// Command outcome separating usage mistakes (exit 2) from runtime failures
/// (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
