use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("pattern enumeration would produce {count} patterns (limit {limit})")]
    TooLarge { count: u128, limit: u128 },

    #[error("coverage cannot be repaired: K*M = {capacity} < N_s = {n_s}")]
    Unrepairable { capacity: usize, n_s: usize },

    #[error("surrogate log argument {value} <= 0 at beam {beam}, slot {slot}")]
    NonPositiveLogArgument { beam: usize, slot: usize, value: f64 },

    #[error("no candidate patterns to evaluate")]
    NoCandidates,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
}
