use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A real-valued argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// The size equation has no usable root.
    #[error(
        "no root of ln phi in ({lower:.6}, {upper:.6}): ln phi = {value_lower:.6e} at lower end, \
         {value_upper:.6e} at upper end ({regime})"
    )]
    NoRoot {
        lower: f64,
        upper: f64,
        value_lower: f64,
        value_upper: f64,
        regime: String,
        /// Smallest root in (δ, n − δ), when one exists outside the requested bracket.
        widened_root: Option<f64>,
    },

    /// An iterative method ran out of iterations.
    #[error("{method} did not converge within {iterations} iterations")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
    },

    /// Exhaustive enumeration would exceed the configured evaluation budget.
    #[error("exhaustive enumeration needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    /// A matrix or record file could not be parsed.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
