//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters fail validation (negative intensity, bad vol table, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Grid construction or grid-function arguments fail validation.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Construction of the fundamental pair failed (overflow, sign loss, ...).
    #[error("fundamental pair: {0}")]
    FundamentalPair(String),

    /// An input function violates the convex/decreasing/bounded preconditions.
    #[error("shape violation: {0}")]
    Shape(String),

    /// A scalar argument lies outside its admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The boundary objective has no sign change: no admissible exercise
    /// level exists on the search interval.
    #[error("no exercise boundary: {0}")]
    NoBoundary(String),

    /// The boundary objective changed sign more than once. Each entry is a
    /// bracketing interval; the root is ambiguous and the solve stops loudly.
    #[error("boundary objective has multiple sign changes: brackets {0:?}")]
    MultipleBrackets(Vec<(f64, f64)>),

    /// The fixed-point iteration failed at a specific sweep.
    #[error("solver failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Monte Carlo configuration is unusable (step too coarse, bad counts).
    #[error("monte carlo: {0}")]
    MonteCarlo(String),

    /// Run configuration file is malformed or inconsistent.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
