use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no shooting bracket for Q(0) in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("{what} did not converge")]
    NotConverged { what: &'static str },
    #[error("lowest eigenvalue {0} of the linearized operator is not negative")]
    PositiveGroundEigenvalue(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("center {0} lies outside the admissible domain")]
    CenterOutOfDomain(f64),
    #[error("centers are too close: minimum distance {0}")]
    CentersTooClose(f64),
    #[error("non-finite value at t = {0}")]
    NonFinite(f64),
    #[error("center fit diverged: {0}")]
    NewtonDiverged(String),
    #[error("centers collided at t = {t} (distance {distance})")]
    CollisionDetected { t: f64, distance: f64 },
    #[error("both endpoints classify as {0}")]
    SameOutcomeAtEndpoints(String),
    #[error("endpoint outcomes are not a decay/blow-up pair: {0}")]
    BracketInvalid(String),
    #[error("{0} consecutive bisection probes were undetermined")]
    UndeterminedDominates(usize),
    #[error("quadrant labels are inconsistent: {0}")]
    QuadrantInconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
