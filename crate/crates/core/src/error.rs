use thiserror::Error;

/// Errors produced by the quantization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("subvector dimension {dim} does not divide {len} weights")]
    NonDivisibleDimension { dim: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("requested {k} clusters but only {n} points are available")]
    TooManyClusters { k: usize, n: usize },

    #[error("all {n} points are identical; cannot form {k} clusters")]
    DegenerateInput { n: usize, k: usize },

    #[error("point weights are all zero")]
    AllZeroWeights,

    #[error("index {index} out of range for {bound} entries")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("model has no codewords with members")]
    EmptyModel,

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("codebook entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("codebook size {0} exceeds the 8-bit index limit of 256")]
    UnsupportedK(usize),

    #[error("stream truncated: needed {needed} more bytes")]
    TruncatedStream { needed: usize },

    #[error("tile of {bytes} bytes exceeds {capacity}-byte buffer")]
    BufferOverflow { bytes: u64, capacity: u64 },

    #[error("layer specs differ: {0}")]
    MismatchedSpecs(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
