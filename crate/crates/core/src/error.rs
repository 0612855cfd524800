use core::fmt;

/// Configuration and usage errors surfaced by construction and queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Error {
    /// Two operands disagree on dimensionality.
    DimensionMismatch { left: usize, right: usize },
    /// Partitioned operands were split at different positions.
    SplitMismatch { left: usize, right: usize },
    /// Split position outside [1, dim].
    InvalidSplit { split_dim: usize, dim: usize },
    /// Fewer items than the index depth k_max.
    ItemSetSmallerThanKMax { m: usize, k_max: usize },
    /// Query depth k outside [1, k_max] for the built index.
    KExceedsIndexKMax { k: usize, k_max: usize },
    /// A vector coordinate was NaN or infinite.
    NonFinite,
    /// A size or budget parameter failed validation.
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Error::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            Error::SplitMismatch { left, right } => {
                write!(f, "split dimension mismatch: {left} vs {right}")
            }
            Error::InvalidSplit { split_dim, dim } => {
                write!(f, "split dimension {split_dim} outside [1, {dim}]")
            }
            Error::ItemSetSmallerThanKMax { m, k_max } => {
                write!(f, "item set smaller than k_max: {m} < {k_max}")
            }
            Error::KExceedsIndexKMax { k, k_max } => {
                write!(f, "k exceeds index k_max: {k} > {k_max} (rebuild the index)")
            }
            Error::NonFinite => write!(f, "non-finite vector coordinate"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
