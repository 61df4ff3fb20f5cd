use crate::exponent::Exponent;

/// Errors raised by the symbolic and numeric layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice input: {0}")]
    InvalidLattice(String),

    #[error("invalid exponent `{0}`")]
    InvalidExponent(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("grading violation: {0}")]
    GradingViolation(String),

    #[error("order {0} is below the accuracy target but is not a lattice value")]
    OrderOutsideLattice(Exponent),

    #[error("order hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("coincident diagonal entries d[{0}] and d[{1}]")]
    CoincidentDiagonal(usize, usize),

    #[error("unknown symbol {0}")]
    UnknownSymbol(String),

    #[error("abscissa must be positive, got {0}")]
    NonPositiveAbscissa(f64),

    #[error("cannot bound growing term {0} on an unbounded interval")]
    GrowingTerm(String),

    #[error("X too small for rigorous bound: {0}")]
    RigorFailure(String),

    #[error("quadrature did not converge (achieved error estimate {0:e})")]
    Quadrature(f64),

    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),

    #[error("ill-conditioned back-transformation at x = {x}: condition estimate {cond:e}")]
    IllConditioned { x: f64, cond: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
