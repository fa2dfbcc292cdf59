use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("Newton refinement did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("drift matrix is unstable: eigenvalue {eigenvalue} has non-negative real part")]
    Unstable { eigenvalue: Complex64 },

    #[error("resolvent is singular at Omega = {omega}")]
    SingularResolvent { omega: f64 },

    #[error("density matrix invariant violated at t = {time}: {what}")]
    ToyInvariant { time: f64, what: String },

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
