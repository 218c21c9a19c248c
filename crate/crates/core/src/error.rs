use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    #[error("metric is not positive definite at grid point {point}")]
    NotPositiveDefinite { point: usize },

    #[error("integer overflow evaluating {0}")]
    Overflow(&'static str),

    #[error("irreducible subspaces overlap: max |<A,B>| = {overlap:e}")]
    ProjectorOverlap { overlap: f64 },

    #[error("{operator} has {dofs} degrees of freedom, above the dense cap of {cap}; shrink the grid")]
    TooManyDofs { operator: String, dofs: usize, cap: usize },

    #[error("bundle mismatch: expected {expected}, found {found}")]
    BundleMismatch { expected: String, found: String },

    #[error("convention check failed in {check}: residual {residual:e} exceeds {limit:e}")]
    ConventionBreach { check: &'static str, residual: f64, limit: f64 },

    #[error("eigensolver did not converge (max residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("expression parse error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}
