use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the calibration core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix or vector dimensions disagree.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A label is outside `[0, classes)`.
    LabelOutOfRange {
        row: usize,
        label: u32,
        classes: usize,
    },
    /// A logit or parameter is NaN or infinite.
    NonFinite { row: usize, col: usize },
    /// A configuration value violates its invariant.
    InvalidConfig(&'static str),
    /// A class does not hold enough samples for a requested subsample.
    InsufficientSamples {
        class: usize,
        available: usize,
        required: usize,
    },
    /// A computation produced a non-finite value (for instance an underflowed temperature).
    NumericDomain(&'static str),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize },
    /// Correlation of a series with zero variance.
    UndefinedCorrelation,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(
                f,
                "shape mismatch in {what}: expected {expected}, found {found}"
            ),
            Error::LabelOutOfRange {
                row,
                label,
                classes,
            } => write!(
                f,
                "label {label} at row {row} is out of range for {classes} classes"
            ),
            Error::NonFinite { row, col } => {
                write!(f, "non-finite value at row {row}, column {col}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InsufficientSamples {
                class,
                available,
                required,
            } => write!(
                f,
                "class {class} has {available} samples but {required} are required (deficit {})",
                required - available
            ),
            Error::NumericDomain(msg) => write!(f, "numeric domain error: {msg}"),
            Error::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            Error::UndefinedCorrelation => {
                write!(f, "correlation is undefined for a zero-variance series")
            }
        }
    }
}

impl core::error::Error for Error {}
