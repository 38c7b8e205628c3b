use thiserror::Error;

/// Errors raised by the decomposition core and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A NaN or infinity reached a boundary that only admits finite values.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Invalid configuration or parameter value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A solver produced a non-finite iterate or a runaway loss.
    #[error("{solver} diverged at iteration {iteration} (last finite loss {last_loss:e})")]
    Divergence {
        solver: &'static str,
        iteration: usize,
        last_loss: f64,
    },

    /// A matrix file does not start with the expected magic bytes.
    #[error("bad magic bytes: expected ORPM")]
    BadMagic,

    /// A matrix file has an unsupported format version.
    #[error("unsupported format version {0}")]
    BadVersion(u16),

    /// A file ended before its declared payload.
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    /// A matrix file carries bytes beyond its declared payload.
    #[error("{0} unexpected trailing bytes after the payload")]
    TrailingData(usize),

    /// Malformed CSV matrix.
    #[error("csv: {0}")]
    Csv(String),

    /// Malformed PGM image.
    #[error("pgm: {0}")]
    Pgm(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
