use thiserror::Error;

/// Failures raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("root finder did not converge for stress {tau} after {iterations} iterations")]
    RootFinding { tau: f64, iterations: usize },

    #[error("quadrature did not reach tolerance: estimate {value}, error estimate {error}")]
    Quadrature { value: f64, error: f64 },

    #[error("{stage} did not converge: {iterations} iterations, last residual {residual:e}")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("drive magnitude {magnitude} exceeds flux table range {rho_max}")]
    OutOfRange { magnitude: f64, rho_max: f64 },

    #[error("flux table node at delta = ({d1}, {d2}) failed: {source}")]
    TableNode {
        d1: f64,
        d2: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
