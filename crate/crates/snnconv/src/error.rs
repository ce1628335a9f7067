use thiserror::Error;

/// Errors produced by model construction, conversion, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter violates its validity constraints; the message names the
    /// failed constraint.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Model layer ordering or pairing is structurally wrong.
    #[error("model structure: {0}")]
    Structure(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training diverged or was misconfigured.
    #[error("training: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;
