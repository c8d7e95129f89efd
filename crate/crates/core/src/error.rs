use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {msg} (achieved error bound {bound:e})")]
    NumericFailure { msg: String, bound: f64 },

    #[error("recurrence doubtful: {fraction:.3} of paths reached the state cap")]
    RecurrenceDoubtful { fraction: f64 },

    #[error("{code} line {line}: {msg}")]
    Config {
        code: &'static str,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
