use thiserror::Error;

/// Errors raised by the OTFS toolkit.
#[derive(Debug, Error)]
pub enum OtfsError {
    #[error("invalid frame parameters: {0}")]
    InvalidParams(String),

    #[error("index ({l}, {k}) outside the {m}x{n} delay-Doppler grid")]
    IndexOutOfRange { l: usize, k: usize, m: usize, n: usize },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense channel matrix of order {order} exceeds the configured cap of {cap}")]
    MatrixTooLarge { order: usize, cap: usize },

    #[error("path delay of {delay_samples:.3} samples exceeds the cyclic prefix of {cp_len} samples")]
    DelayExceedsPrefix { delay_samples: f64, cp_len: usize },

    #[error("reference channel matrix has zero Frobenius norm")]
    ZeroReference,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed frame file: {0}")]
    Frame(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = OtfsError> = std::result::Result<T, E>;
