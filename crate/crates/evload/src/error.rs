use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("meter {meter_id}: {msg}")]
    BadSeries { meter_id: String, msg: String },

    #[error("time grids do not match")]
    GridMismatch,

    #[error("series lengths do not match ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },

    #[error("normal matrix is singular or ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("rate fit did not converge (mean residual {residual:.3e} kW)")]
    NoConvergence { residual: f64 },

    #[error("no {kind} crossing of the daily mean in the {window} window")]
    NoCrossing {
        kind: &'static str,
        window: &'static str,
    },

    #[error("profile has no zero crossing")]
    NoZeroCrossing,

    #[error("degenerate time statistics: {0}")]
    DegenerateStats(String),

    #[error("resample limit of {0} exceeded while drawing a session")]
    ResampleLimit(usize),

    #[error("signal has zero range")]
    ZeroRange,

    #[error("signal is constant; valley set is undefined")]
    ConstantSignal,

    #[error("need at least 2 samples to fit a density")]
    TooFewSamples,

    #[error("dimension {0} has zero spread")]
    ZeroSpread(usize),

    #[error("expected a {expected}-dimensional model, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("config: {0}")]
    BadConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
