use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes or geometries do not agree.
    Shape(String),
    /// A NaN or infinity reached an operation boundary.
    NonFinite(&'static str),
    /// An argument violated an operation precondition.
    InvalidArgument(String),
    /// An operation needs at least one element and got none.
    Empty(&'static str),
    /// A degenerate input (zero variance, single class, ...) with no defined result.
    Degenerate(&'static str),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, loss: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Degenerate(what) => write!(f, "degenerate input: {what}"),
            Error::Diverged { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch} (loss {loss})")
            }
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
pub(crate) use shape_err;
