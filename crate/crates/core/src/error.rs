use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no qualifying clip window after {budget} draws (population range {min}..={max}, duration {duration} s)")]
    ClipNotFound {
        budget: usize,
        min: usize,
        max: usize,
        duration: f64,
    },

    #[error("clip rate {found} Hz does not match required {expected} Hz; resample the clip first")]
    RateMismatch { expected: f64, found: f64 },

    #[error("pair {pair}: real clip has {real} pedestrians but simulated clip has {simulated}")]
    PopulationMismatch {
        pair: usize,
        real: usize,
        simulated: usize,
    },

    #[error("step size underflow at t = {t:.6} s (h = {h:e}); state dump:\n{dump}")]
    StepUnderflow { t: f64, h: f64, dump: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
