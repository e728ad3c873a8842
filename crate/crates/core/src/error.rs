use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty region")]
    EmptyRegion,

    #[error("class not present: {0}")]
    ClassNotPresent(u8),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by layer `{0}`")]
    NonFinite(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: String,
    },

    #[error("layer `{layer}` has shape {found:?}, expected {expected:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing layer `{0}`")]
    MissingLayer(String),

    #[error("unexpected layer `{0}`")]
    UnexpectedLayer(String),

    #[error("truncated blob: need {needed} bytes, have {available}")]
    TruncatedBlob { needed: u64, available: u64 },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("image codec: {0}")]
    Codec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// True for the errors that mean "this weight file does not fit the network".
    pub fn is_weights_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::LayerShape { .. }
                | Error::MissingLayer(_)
                | Error::UnexpectedLayer(_)
                | Error::TruncatedBlob { .. }
                | Error::Manifest(_)
        )
    }
}
