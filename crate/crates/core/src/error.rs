use thiserror::Error;

/// Errors raised by the library.
///
/// Each variant maps onto one of the stable process exit codes used by the
/// command line front end (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("assumption check failed: {0}")]
    Assumption(String),

    #[error("quadrature did not converge (partial result {partial}, achieved tolerance {achieved:e})")]
    Quadrature { partial: f64, achieved: f64 },

    #[error("time step {dt:e} violates the explicit stability bound; use dt <= {suggested:e}")]
    Cfl { dt: f64, suggested: f64 },

    #[error("simulation failed at step {step}: {reason}")]
    Simulation { step: usize, reason: String },

    #[error("degenerate volatility: sigma vanishes at node y = {node}")]
    DegenerateVolatility { node: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config line {line}: key `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Exit code contract: 1 usage, 2 assumption failure, 3 numerical
    /// failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::Domain(_)
            | Error::Usage(_)
            | Error::Config { .. } => 1,
            Error::Assumption(_) => 2,
            Error::Quadrature { .. }
            | Error::Cfl { .. }
            | Error::Simulation { .. }
            | Error::DegenerateVolatility { .. }
            | Error::Numerical(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
