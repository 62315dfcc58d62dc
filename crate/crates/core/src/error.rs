use std::io;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("zero contrast: fringe visibility must be positive")]
    ZeroContrast,

    #[error("carrier too low: sideband at distance {distance:.2} lies within window radius {radius:.2} of DC")]
    CarrierTooLow { distance: f64, radius: f64 },

    #[error("architecture collapsed: decoder stage 1 has no inputs")]
    ArchitectureCollapsed,

    #[error("acyclicity violated: {0}")]
    Acyclicity(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
