use std::fmt;
use std::io;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Shape or dimension mismatch between tensors, layers or detectors.
    Dimension(String),
    /// Malformed binary file (model or IDX). Carries the byte offset at
    /// which the problem was detected when known.
    Format { offset: Option<u64>, msg: String },
    /// Invalid configuration value or unknown key. `line` is 1-based when
    /// the error comes from a config file.
    Config { line: Option<usize>, msg: String },
    /// Dataset-level problem (empty, label out of range, ...).
    Data(String),
    /// Detector fitting cannot proceed (e.g. constant costs).
    Fit(String),
    /// Training produced a non-finite loss.
    Diverged(String),
    /// A pipeline command needs an artifact that has not been produced yet.
    MissingArtifact(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Format { offset: Some(off), msg } => {
                write!(f, "format error at byte {off}: {msg}")
            }
            Error::Format { offset: None, msg } => write!(f, "format error: {msg}"),
            Error::Config { line: Some(line), msg } => {
                write!(f, "config error at line {line}: {msg}")
            }
            Error::Config { line: None, msg } => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Fit(msg) => write!(f, "fit error: {msg}"),
            Error::Diverged(msg) => write!(f, "training diverged: {msg}"),
            Error::MissingArtifact(msg) => write!(f, "missing artifact: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn format_at(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset: Some(offset), msg: msg.into() }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format { offset: None, msg: msg.into() }
    }

    pub fn config_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line: Some(line), msg: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config { line: None, msg: msg.into() }
    }
}
