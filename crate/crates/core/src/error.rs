use thiserror::Error;

pub type Result<T> = std::result::Result<T, AoiError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiError {
    /// A parameter is outside the domain of the object being built.
    #[error("invalid parameter {name}={value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A transform was requested outside its region of convergence.
    #[error("{quantity} is undefined at s={s}: region of convergence is s < {sup}")]
    Domain {
        quantity: &'static str,
        s: f64,
        sup: f64,
    },

    #[error("quadrature failed ({what}), estimated error {error:e}")]
    Quadrature { what: String, error: f64 },

    /// The conditioning event has probability zero.
    #[error("{quantity} is degenerate: {reason}")]
    Degenerate {
        quantity: &'static str,
        reason: &'static str,
    },

    #[error("Richardson extrapolation for {quantity} did not converge (best error {error:e})")]
    Precision { quantity: &'static str, error: f64 },

    #[error("no sign change found for {quantity} on ({lo}, {hi})")]
    Bracket {
        quantity: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("cannot merge replications of different systems: {0}")]
    ConfigMismatch(String),

    #[error("cannot parse {input:?}: bad token {token:?} ({reason})")]
    Parse {
        input: String,
        token: String,
        reason: String,
    },
}
