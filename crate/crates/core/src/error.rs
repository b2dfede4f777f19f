//! Error type shared by every module in the crate.

use std::fmt;
use std::io;

#[derive(Debug)]
pub enum Error {
    /// Two tensors (or a tensor and an operator) disagree on shape.
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A gradient, loss, or sample came out NaN/inf where finite values are required.
    NonFinite(String),
    /// Conjugate gradients stalled or ran out of iterations. Rank-deficient
    /// systems surface here as stagnation.
    CgDidNotConverge {
        achieved: f64,
        tol: f64,
        iterations: usize,
    },
    /// Every solver restart produced a non-finite objective.
    AllRestartsDiverged { restarts: usize },
    /// Training loss became non-finite; the partial loss trace is attached.
    TrainingDiverged { epoch: usize, trace: Vec<f64> },
    /// An experiment spec failed validation (CLI exit code 2).
    InvalidSpec(String),
    Io(io::Error),
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "shape mismatch in {context}: expected {expected:?}, got {got:?}"
            ),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::CgDidNotConverge {
                achieved,
                tol,
                iterations,
            } => write!(
                f,
                "conjugate gradients did not converge: relative residual {achieved:.3e} \
                 after {iterations} iterations (tolerance {tol:.3e})"
            ),
            Error::AllRestartsDiverged { restarts } => {
                write!(f, "all {restarts} solver restarts diverged")
            }
            Error::TrainingDiverged { epoch, .. } => {
                write!(f, "training loss became non-finite at epoch {epoch}")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid experiment spec: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
