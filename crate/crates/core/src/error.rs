use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to map failures onto process exit codes
/// (input errors exit 2, numerical errors exit 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible layer dimensions: {0}")]
    InfeasibleDims(String),

    #[error("failed to parse {path} line {line}: {detail}")]
    CsvParse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("root finder failed: {0}")]
    RootFinder(String),

    #[error(
        "target magnitude {magnitude} sits on the measure-zero tie set \
         (critical magnitude {critical}); the minimizer is not unique there"
    )]
    TieCase { magnitude: f64, critical: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_)
            | Error::ShapeMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::InfeasibleDims(_)
            | Error::CsvParse { .. }
            | Error::Io(_)
            | Error::TieCase { .. } => ErrorKind::Input,
            Error::SvdFailed | Error::RootFinder(_) | Error::Inconsistent(_) => {
                ErrorKind::Numerical
            }
        }
    }
}

pub(crate) fn shape_mismatch(expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        expected_rows: expected.0,
        expected_cols: expected.1,
        rows: got.0,
        cols: got.1,
    }
}
