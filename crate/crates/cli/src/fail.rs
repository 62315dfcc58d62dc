use std::fmt;
use std::path::Path;

/// Why a command stopped; selects the exit code.
#[derive(Debug)]
pub enum Fail {
    /// Bad flags, invalid configuration or data that fails validation.
    Usage(String),
    /// A file could not be read or written.
    Io(String),
}

impl Fail {
    pub fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Io(_) => 2,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Fail::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Usage(m) | Fail::Io(m) => f.write_str(m),
        }
    }
}

impl From<fringeforge::Error> for Fail {
    fn from(e: fringeforge::Error) -> Self {
        match e {
            fringeforge::Error::Io(_) => Fail::Io(e.to_string()),
            other => Fail::Usage(other.to_string()),
        }
    }
}

/// Attaches the path to core errors raised while reading a file.
pub trait AtPath<T> {
    fn at(self, path: &Path) -> Result<T, Fail>;
}

impl<T> AtPath<T> for fringeforge::Result<T> {
    fn at(self, path: &Path) -> Result<T, Fail> {
        self.map_err(|e| match e {
            fringeforge::Error::Io(io) => Fail::io(path, io),
            other => Fail::Usage(format!("{}: {other}", path.display())),
        })
    }
}
