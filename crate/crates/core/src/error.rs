use thiserror::Error;

/// Errors raised by the functional MMD toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible meshes: samples are not discretised on the same mesh")]
    IncompatibleMesh,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate spectrum: covariance has no variance to explain")]
    DegenerateSpectrum,

    #[error("degenerate bandwidth: all pairwise distances are zero")]
    DegenerateBandwidth,

    #[error("degenerate signal-to-noise ratio: xi_2 = {0:e} is not positive")]
    DegenerateSnr(f64),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("data error at line {line}: {message}")]
    Data { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
