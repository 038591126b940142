use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0} lies outside the unit interval")]
    Domain(f64),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid hole: {0}")]
    InvalidHole(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("orbit of {point} comes within {distance:e} of critical point {critical} at step {step}")]
    SingularDerivative {
        point: f64,
        critical: f64,
        step: usize,
        distance: f64,
    },

    #[error("potential parameter t = {t} outside the integrable range (t < {limit})")]
    NonIntegrable { t: f64, limit: f64 },

    #[error("power iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("grid inconsistency: {0}")]
    GridInconsistency(String),

    #[error("budget of {budget} pieces exceeded at depth {depth}")]
    BudgetExceeded { budget: usize, depth: usize },

    #[error("no sign change of the punctured pressure on [{lo}, {hi}]")]
    NoSignChange {
        lo: f64,
        hi: f64,
        curve: Vec<(f64, f64)>,
    },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-hyperbolic orbit: {0}")]
    NonHyperbolic(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
