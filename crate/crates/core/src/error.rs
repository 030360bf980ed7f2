//! Crate-wide error type.
//!
//! One enum covers all modules; the variants map onto the failure classes the
//! CLI distinguishes (bad arguments, numeric trouble, I/O, malformed files,
//! cross-input inconsistencies).

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up (matrix products, parameter schemas,
    /// vector lengths).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied value is out of range or otherwise unusable.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced NaN/Inf or could not proceed numerically.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A box or crop is degenerate (empty intersection with the image, zero
    /// pixel footprint, ...).
    #[error("bad geometry: {0}")]
    Geometry(String),

    /// A sequence exceeds a configured capacity.
    #[error("capacity exceeded: {what} has length {got}, maximum is {max}")]
    Capacity {
        what: &'static str,
        got: usize,
        max: usize,
    },

    /// Scene generation could not satisfy its placement constraints.
    #[error("generation failed: {0}")]
    Generation(String),

    /// A persisted artifact is malformed. `line` is 1-based where it applies
    /// (line-oriented formats), 0 otherwise.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A persisted artifact has an unsupported format version.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Inputs that must describe the same run disagree with each other.
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a [`Error::Parse`] without a meaningful line number.
    pub fn parse_msg(msg: impl Into<String>) -> Self {
        Error::Parse {
            line: 0,
            msg: msg.into(),
        }
    }
}
