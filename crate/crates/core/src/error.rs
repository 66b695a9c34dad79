use alloc::string::String;
use core::fmt;

/// Errors raised by the streaming reduction, tiling model and simulators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// Matrix or vector dimensions do not line up.
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// The initial block handed to the subspace tracker has rank below `k`.
    RankDeficientInit { column: usize, pivot: f64 },
    /// Input data contains NaN or infinite values.
    NonFinite(&'static str),
    /// A factorization failed to converge or produced non-finite values.
    Numerical(String),
    /// The forward filter normalizer underflowed; the caller should teleport.
    FilterDegenerate,
    /// Not enough samples for the requested evaluation protocol.
    InsufficientData { needed: usize, available: usize },
    /// The ODE integrator left the representable range.
    IntegrationDiverged { step: usize },
    /// The operation was skipped because its precondition does not hold.
    Precondition(&'static str),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape {
            what,
            expected,
            found,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Shape {
                what,
                expected,
                found,
            } => write!(
                f,
                "shape mismatch for {what}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::RankDeficientInit { column, pivot } => write!(
                f,
                "initial block is rank deficient: pivot {column} has magnitude {pivot:e}"
            ),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::FilterDegenerate => write!(f, "forward filter normalizer underflowed"),
            Error::InsufficientData { needed, available } => write!(
                f,
                "insufficient data: need at least {needed} samples, got {available}"
            ),
            Error::IntegrationDiverged { step } => {
                write!(f, "integration diverged at step {step}")
            }
            Error::Precondition(what) => write!(f, "precondition violated: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
