use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("coefficient spec violation: {0}")]
    CoefficientViolation(String),

    #[error("time step underflow at t = {t}: dt = {dt:e} reached dt_min with error ratio {err:.3e}")]
    StepUnderflow { t: f64, dt: f64, err: f64 },

    #[error("zero number increased from {before} to {after} between t = {t0} and t = {t1}; grid or time step too coarse")]
    DroppingViolation {
        t0: f64,
        t1: f64,
        before: i64,
        after: i64,
    },

    #[error("point at infinity has no finite representative (z = 0)")]
    AtInfinity,

    #[error("state outside chart domain: anchor projection {0:e} is not positive")]
    OutsideChart(f64),

    #[error("non-generic configuration: {0}")]
    NonGeneric(String),

    #[error("equilibrium e{id} is not hyperbolic: eigenvalue {eigenvalue:e} within tolerance {tol:e} of zero")]
    NonHyperbolic { id: usize, eigenvalue: f64, tol: f64 },

    #[error("eigen-solver failure: {0}")]
    EigenFailure(String),

    #[error("Newton polish did not converge: residual {0:e}")]
    NewtonFailure(f64),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a loss of numerical fidelity rather than
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. }
                | Error::DroppingViolation { .. }
                | Error::EigenFailure(_)
                | Error::NewtonFailure(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
