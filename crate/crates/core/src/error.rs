use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// An expanding map was asked to iterate deeper than the point's bits allow.
    #[error("precision exhausted: need {needed} bits, point carries {available}")]
    PrecisionExhausted { needed: u32, available: u32 },

    #[error("map mismatch: derived metric is built over `{metric_map}` but `{requested}` was given")]
    MapMismatch { metric_map: String, requested: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
