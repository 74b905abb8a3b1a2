use std::fmt;
use std::path::Path;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }

    pub fn io_at(path: &Path, err: impl fmt::Display) -> Self {
        Self::io(format!("{}: {err}", path.display()))
    }

    /// Wraps a library error raised while handling `path`.
    pub fn at(path: &Path, err: msgwnn::Error) -> Self {
        let mut e = Self::from(err);
        e.message = format!("{}: {}", path.display(), e.message);
        e
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<msgwnn::Error> for CliError {
    fn from(err: msgwnn::Error) -> Self {
        let code = match &err {
            msgwnn::Error::Io(_) => EXIT_IO,
            msgwnn::Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: err.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
