use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header line {line}: {msg}")]
    Header { line: usize, msg: String },

    #[error("unsupported format {0}")]
    UnsupportedFormat(String),

    #[error("zero channels")]
    ZeroChannels,

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("length mismatch: header declares {expected} samples, data holds {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("annotation index overflow at byte {0}")]
    AnnotationOverflow(usize),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("median window must be odd and positive, got {0}")]
    InvalidWindow(usize),

    #[error("invalid cutoff {cutoff_hz} Hz for sampling rate {fs} Hz")]
    InvalidCutoff { cutoff_hz: f64, fs: f64 },

    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("RR interval must be positive, got {0}")]
    NonPositiveRr(f64),

    #[error("zero-power {0}")]
    ZeroPower(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unknown mode {0:?}")]
    UnknownMode(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
