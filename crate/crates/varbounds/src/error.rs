//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the pricing, solver and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value failed validation.
    #[error("invalid input: {message}")]
    InvalidInput { message: String },

    /// A call-price curve violates static no-arbitrage constraints.
    #[error("arbitrage in call curve: {message}")]
    Arbitrage { message: String },

    /// An initial/target measure pair cannot be embedded.
    #[error("infeasible embedding ({reason}): max violation {max_violation:.3e} at x={location:.6}")]
    Infeasible {
        reason: String,
        max_violation: f64,
        location: f64,
    },

    /// Numerical quadrature did not converge to the requested accuracy.
    #[error("quadrature failure: {message}")]
    Quadrature { message: String },

    /// The complementary-pivot solver terminated on a secondary ray.
    #[error("LCP ray termination after {pivots} pivots")]
    LcpRay { pivots: usize },

    /// The complementary-pivot solver hit its pivot budget.
    #[error("LCP pivot limit ({pivots}) exceeded, residual {residual:.3e}")]
    LcpMaxPivots { pivots: usize, residual: f64 },

    /// A solver produced a state that fails its own consistency checks.
    #[error("numerical failure: {message}")]
    Numerical { message: String },

    /// Configuration or file-format problem.
    #[error("config error: {message}")]
    Config { message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(message: impl Into<String>) -> Self {
        Error::InvalidInput {
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
