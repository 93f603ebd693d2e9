use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("hypothesis (general inf) fails: {0}")]
    Hypothesis(String),
    #[error("function is not in the operator domain: residue {residue:.3e} at atom x = {location}")]
    NotInDomain { location: f64, residue: f64 },
    #[error("singular matching at z = {z}: condition estimate {condition:.3e}")]
    SingularMatching { z: String, condition: f64 },
    #[error("adaptive step failed near x = {x}")]
    StepFailure { x: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
