use std::path::{Path, PathBuf};

use lossscale_core::Error as CoreError;

/// Problems found while decoding a dataset or calibrator file.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("missing SCTL magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} unexpected bytes after the labels")]
    TrailingBytes { extra: usize },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("header declares {declared} rows but the file holds {found}")]
    RowCount { declared: usize, found: usize },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {text:?}")]
    BadNumber {
        row: usize,
        col: usize,
        text: String,
    },
    #[error("row {row}: label {label} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: u64,
        classes: usize,
    },
    #[error("row {row}, column {col}: value is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("invalid contents: {0}")]
    Invalid(CoreError),
}

impl From<CoreError> for FormatError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::LabelOutOfRange {
                row,
                label,
                classes,
            } => FormatError::LabelOutOfRange {
                row,
                label: label as u64,
                classes,
            },
            CoreError::NonFinite { row, col } => FormatError::NonFinite { row, col },
            other => FormatError::Invalid(other),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{phase}: {source}")]
    Core {
        phase: &'static str,
        source: CoreError,
    },
    #[error("{phase}: training diverged at epoch {epoch}")]
    Diverged { phase: &'static str, epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 4,
            Error::Diverged { .. } => 3,
            Error::Core { source, .. } => match source {
                CoreError::NonFinite { .. }
                | CoreError::NumericDomain(_)
                | CoreError::Diverged { .. }
                | CoreError::UndefinedCorrelation => 3,
                _ => 2,
            },
        }
    }
}

/// Attaches a run phase to core errors.
pub(crate) trait Phase<T> {
    fn phase(self, phase: &'static str) -> Result<T>;
}

impl<T> Phase<T> for std::result::Result<T, CoreError> {
    fn phase(self, phase: &'static str) -> Result<T> {
        self.map_err(|source| Error::Core { phase, source })
    }
}
