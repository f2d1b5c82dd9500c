use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field violates its invariant.
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("channel {0} has no tags")]
    MissingChannel(u8),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("quadrature did not converge (achieved error estimate {achieved:.3e}, requested {requested:.3e})")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("target g2 {target} is unreachable; achievable floor is {floor:.6}")]
    UnreachableTarget { target: f64, floor: f64 },

    /// Malformed binary tag data.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn require(cond: bool, field: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidConfig { field, reason: reason.into() })
    }
}
