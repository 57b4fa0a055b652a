use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("alphabet size {0} is not supported (must be between 1 and {max})", max = crate::prob::MAX_ALPHABET)]
    UnsupportedAlphabet(usize),

    #[error("grid has {count} points, exceeding the cap of {cap}")]
    GridTooLarge { count: u128, cap: usize },

    #[error("composition is not aligned to the 1/{k} grid")]
    NotGridAligned { k: u32 },

    #[error("composition is not realizable at blocklength {n}")]
    UnrealizableComposition { n: usize },

    #[error("output enumeration of {count} sequences exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
