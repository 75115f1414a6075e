use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("dense materialization of a {n}x{n} matrix exceeds the cap {cap} (set HIERENC_DENSE_CAP to raise it)")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error(
        "size {n} is not a power of two; apply adaptive_mesh (and power-of-two padding) first"
    )]
    NotPowerOfTwo { n: usize },

    #[error("minimum separation violated: {detail}")]
    MinSeparation { detail: String },

    #[error("level {level} has no admissible blocks (admissible levels start at 2)")]
    LevelOutOfRange { level: usize },

    #[error("variant {variant} does not support {what}")]
    UnsupportedVariant { variant: String, what: String },

    #[error("kernel family {family} does not support {op}")]
    UnsupportedFamily { family: String, op: String },

    #[error("block ({row}, {col}) at level {level} is not admissible; the expansion diverges")]
    InadmissibleBlock { level: usize, row: i64, col: i64 },

    #[error("no derivative rule for kernel family {family}; use the SVD fallback")]
    NoDerivativeRule { family: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what}: bound {bound} violated by {actual}")]
    BoundViolated {
        what: String,
        bound: f64,
        actual: f64,
    },

    #[error("sub-encodings must share the ancilla count (saw {a} and {b}); pad the smaller one")]
    HeterogeneousAncillas { a: u32, b: u32 },

    #[error("coefficient vector of length {len} does not fit in {slots} state-preparation slots")]
    TooManyCoefficients { len: usize, slots: usize },

    #[error("zero coefficient vector has no state-preparation pair")]
    ZeroVector,

    #[error("matrix entry at ({i}, {j}) = {value} lies outside the admitted magnitude range [{lo}, {hi}]")]
    EntryOutOfRange {
        i: usize,
        j: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("index function collision: {detail}")]
    IndexCollision { detail: String },

    #[error("matrix is singular to working precision")]
    SingularSystem,

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
