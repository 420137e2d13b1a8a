use std::path::PathBuf;

/// Errors raised by the simulator.
///
/// Variants are grouped by who is at fault: a bad configuration, a physics or
/// numerical precondition that the requested run violates, or the filesystem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{key}: {msg} (line {line})")]
    ConfigKey {
        key: String,
        line: usize,
        msg: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("trajectories are on different grids")]
    GridMismatch,

    #[error("delay of {delay} samples exceeds the trajectory span of {span} samples")]
    DelayExceedsSpan { delay: usize, span: usize },

    #[error("click rate precondition violated: peak rate*dt = {0:.3e} > 0.1 (lower rate_per_watt or dt)")]
    RateTooHigh(f64),

    #[error("histogram baseline is zero, cannot normalize")]
    ZeroBaseline,

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("no spectral peak above 3x the median floor")]
    NoPeak,

    #[error("span too short: {0}")]
    SpanTooShort(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the `sim` binary: 2 config, 3 physics/runtime, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigKey { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
