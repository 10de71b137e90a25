//! Error type shared by every module of the crate.

/// Errors produced by channel construction, imaging, the tensor engine,
/// training, the MMSE baseline, and the evaluation drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scene parameter violates its documented range.
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    /// Transceiver geometry is unusable (e.g. a PD outside the room, or a
    /// zero-length optical path).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A scalar argument is outside the domain of the formula it feeds.
    #[error("domain error: {0}")]
    Domain(String),

    /// Min-max normalization cannot be inverted (constant matrix).
    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A NaN or infinity reached an operation boundary in checked mode.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Batch statistics are undefined (too few elements per channel).
    #[error("statistics error: {0}")]
    Statistics(String),

    /// A numerical procedure failed beyond recovery (e.g. factorization
    /// failure after jitter escalation).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An argument has an unusable size (e.g. patch larger than image).
    #[error("size error: {0}")]
    Size(String),

    /// Configuration file or flag value could not be interpreted.
    #[error("config error: {0}")]
    Config(String),

    /// A serialized artifact has a bad magic, version, or layout.
    #[error("format error: {0}")]
    Format(String),

    /// The experimental protocol was violated (e.g. train/test overlap).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
