use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("sequence length {length} is not prime")]
    NotPrime { length: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty profile: no bin above the detection threshold")]
    EmptyProfile,

    #[error("total power of the profile is zero")]
    ZeroPower,

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("config line {line}, key `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {}: {reason}", path.display())]
    CorruptFile { path: PathBuf, reason: String },

    #[error("missing metadata sidecar {}", path.display())]
    MissingSidecar { path: PathBuf },

    #[error("bad magic in {}: expected \"CHDS\"", path.display())]
    BadMagic { path: PathBuf },

    #[error("unsupported dataset version {found} in {}", path.display())]
    UnsupportedVersion { path: PathBuf, found: u16 },

    #[error("size mismatch in {}: header declares {expected} bytes, file has {actual}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for filesystem failures and unreadable binary files, as opposed
    /// to invalid parameters or configuration content.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MissingSidecar { .. }
                | Error::CorruptFile { .. }
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::SizeMismatch { .. }
        )
    }
}
