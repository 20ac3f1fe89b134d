use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("operator support {support} is not contained in window {window}")]
    Window { support: String, window: String },
    #[error("size guard exceeded: {0}")]
    Size(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("series did not reach tolerance {tol:e} within {terms} terms (tail bound {tail:e})")]
    Convergence { tol: f64, terms: usize, tail: f64 },
    #[error("integrand does not decay (fitted rate {rate})")]
    Divergence { rate: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("test function grids do not match")]
    GridMismatch,
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}
