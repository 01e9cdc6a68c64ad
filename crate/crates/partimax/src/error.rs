use thiserror::Error;

/// Errors surfaced by tiling construction, selector parameter validation and
/// the exhaustive oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// Tiling geometry violates an invariant (zero dimension, offset larger
    /// than the box, offset not dividing the box edge).
    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    /// Selector or model parameters out of range.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// An exhaustive computation would exceed its guard
    /// (subset count or observation-pattern count too large).
    #[error("instance too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
