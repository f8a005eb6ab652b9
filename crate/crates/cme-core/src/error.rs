//! Crate-wide error type.

use alloc::string::String;

/// Errors surfaced by estimation, optimization, and environment code.
///
/// Variants map onto the failure classes callers need to tell apart:
/// configuration mistakes ([`Error::InvalidArgument`], [`Error::Shape`],
/// [`Error::Usage`]) versus runtime numerical breakdown
/// ([`Error::Numerical`], [`Error::Optimizer`]).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Operand dimensions are inconsistent.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A parameter is outside its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A computation produced non-finite values or an unsolvable system.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An optimizer step was handed non-finite gradients.
    #[error("optimizer error: {0}")]
    Optimizer(String),
    /// An API was called in a state that does not admit the call.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = core::result::Result<T, Error>;
