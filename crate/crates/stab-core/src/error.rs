use thiserror::Error;

/// Unified error type for parsing, evaluation, and the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabError {
    #[error("syntax error at byte {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },

    #[error("unknown symbol `{name}` at byte {pos}")]
    UnknownSymbol { name: String, pos: usize },

    #[error("`{func}` takes {expected} argument(s), got {got}")]
    Arity {
        func: String,
        expected: usize,
        got: usize,
    },

    #[error("system declares {declared} state(s) but supplies {got} equation(s)")]
    DimensionMismatch { declared: usize, got: usize },

    #[error("invalid system document: {0}")]
    Document(String),

    #[error("domain error: {op} in `{subexpr}`")]
    Domain { op: String, subexpr: String },

    #[error("integrand is not finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("scalar functionals require the first equation to be exactly `x2`")]
    NotCanonical,

    #[error("origin is not an equilibrium: residual {residual:e} exceeds tolerance {tol:e}")]
    NotAnEquilibrium { residual: f64, tol: f64 },

    #[error(
        "|t1| = {t1:e} falls in the ambiguity band ({lo:e}, {hi:e}); \
         refine the quadrature or defer to an epsilon sweep"
    )]
    AmbiguousNearBoundary { t1: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, StabError>;
