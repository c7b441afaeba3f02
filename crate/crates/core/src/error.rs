use num_complex::Complex64;
use thiserror::Error;

use crate::whitham::SingularEvent;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),

    #[error("root finding did not converge (worst residual {worst:.3e})")]
    RootsNotConverged { worst: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("lambda = {0} lies on a branch cut")]
    OnCut(Complex64),

    #[error("path segment {from} -> {to} crosses the cut [{cut_a}, {cut_b}]")]
    CutCrossing {
        from: Complex64,
        to: Complex64,
        cut_a: Complex64,
        cut_b: Complex64,
    },

    #[error("integration blew up near z = {z}: {reason}")]
    BlowUp { z: Complex64, reason: String },

    #[error("ill-conditioned block system (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("truncation N = {n} too small (tail energy {tail:.3e}); retry with a larger N")]
    Truncation { n: usize, tail: f64 },

    #[error("solver failed: {0}")]
    Solve(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular event: {0}")]
    Singular(Box<SingularEvent>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
