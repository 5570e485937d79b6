use thiserror::Error;

use crate::model::Vec3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate stance: {0}")]
    DegenerateStance(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("stance must have exactly {expected} contacts, got {got}")]
    StanceSize { expected: usize, got: usize },

    /// The requested net force lies outside the Minkowski sum of the cones.
    /// `direction` is the unit separating direction from the projection
    /// onto the sum to the requested force.
    #[error("net force infeasible for the friction cones (gap {gap:.3e} N)")]
    Infeasible { gap: f64, direction: Vec3 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (primal {primal_residual:.3e}, dual {dual_residual:.3e})"
    )]
    NotConverged {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("grid does not straddle {what} = {value}")]
    Grid { what: &'static str, value: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason(),
        })
    }
}
