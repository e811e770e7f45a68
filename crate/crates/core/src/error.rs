use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed model header: {0}")]
    MalformedHeader(String),

    #[error("model dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("triangle {triangle} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("underdetermined texture fit: {masked} masked color components for {params} parameters with lambda = 0")]
    Underdetermined { masked: usize, params: usize },

    #[error("normal-equation matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("score {0} is outside the open interval (0, 1)")]
    ScoreDomain(f64),

    #[error("missing Dirichlet boundary: {0}")]
    MissingBoundary(String),

    #[error("solver did not reach the residual bound: {0}")]
    NotConverged(String),

    #[error("image format error: {0}")]
    ImageFormat(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of a numerical routine on otherwise well-formed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Underdetermined { .. }
                | Error::NotPositiveDefinite
                | Error::MissingBoundary(_)
                | Error::NotConverged(_)
        )
    }
}
