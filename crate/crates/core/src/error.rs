use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the library.
///
/// Variants are grouped so that a driver can map them onto coarse exit codes:
/// configuration problems, bad input data (including malformed files), numerical
/// failures, and divergence of a training run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{path}: bad magic (expected {expected:?})")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: unsupported version or format tag ({found:?})")]
    Version { path: PathBuf, found: String },

    #[error("{path}: truncated file (needed {needed} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("{path}: {extra} unexpected trailing bytes")]
    TrailingBytes { path: PathBuf, extra: usize },

    #[error("{path}: unsupported dtype tag {tag:#04x}")]
    UnsupportedDtype { path: PathBuf, tag: u8 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("numerically singular system: {0}")]
    Singular(String),

    #[error("training diverged at outer iteration {iteration}: objective {before} -> {after}")]
    Divergence {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(
    context: &'static str,
    expected: impl Into<String>,
    got: impl Into<String>,
) -> Error {
    Error::Dimension {
        context,
        expected: expected.into(),
        got: got.into(),
    }
}

/// Shape of a matrix rendered as `RxC`, for error messages.
pub(crate) fn shape_str(m: &ndarray::ArrayView2<'_, f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}
