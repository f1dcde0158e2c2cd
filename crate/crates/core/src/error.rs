use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only d = 3, 4, 5 are supported")]
    UnsupportedDimension(usize),

    #[error("point with sup-norm {norm} lies outside the Green table (R0 = {r0}); use GreenTable::green")]
    OutOfTable { norm: u32, r0: u32 },

    #[error("the continuum Green function is singular at the origin")]
    Singularity,

    #[error("malformed Lukasiewicz path: {0}")]
    Codec(String),

    #[error("tree size n = {n} is not admissible: n - 1 must be divisible by {gcd}")]
    Inadmissible { n: u64, gcd: u32 },

    #[error("sampling budget of {0} attempts exhausted")]
    SamplingBudget(u64),

    #[error("degenerate tree: {0}")]
    DegenerateTree(String),

    #[error("exploration too short: need {needed} explored vertices, have {available}; regenerate with a larger minimum length")]
    InsufficientExploration { needed: usize, available: usize },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Green cache {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
