//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors produced by the library's checked operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input contained NaN or infinite entries.
    NonFiniteInput,
    /// A zero gradient where a direction or normalization requires g != 0.
    ZeroGradient,
    /// Gradient-weighted quantities are undefined where the gradient vanishes.
    StationaryPoint,
    /// All-zero or zero-mean input to a dispersion statistic.
    DegenerateDistribution,
    /// A token row is constant, so the centered row is zero.
    ConstantTokenRow(usize),
    /// A token row is exactly zero.
    ZeroRow(usize),
    /// Vector or matrix dimensions do not match.
    ShapeMismatch { expected: usize, got: usize },
    /// A schedule constant required by the selected kind is absent.
    MissingConstant(&'static str),
    /// The objective has no per-sample structure but a minibatch was requested.
    NotSampled,
    /// Any other violated precondition; the message names the offending input.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteInput => write!(f, "non-finite input"),
            Error::ZeroGradient => write!(f, "zero gradient"),
            Error::StationaryPoint => write!(f, "undefined at stationary point"),
            Error::DegenerateDistribution => write!(f, "degenerate distribution"),
            Error::ConstantTokenRow(i) => write!(f, "constant token row {i}"),
            Error::ZeroRow(i) => write!(f, "zero row {i}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::MissingConstant(name) => write!(f, "missing schedule constant `{name}`"),
            Error::NotSampled => write!(f, "objective has no per-sample structure"),
            Error::InvalidArgument(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }
}
