use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("divergent conductivity: current overlaps conserved mode (relative overlap {overlap:.3e})")]
    Divergent { overlap: f64 },

    #[error("unstable time step: dt = {dt:.4e} exceeds the maximum {max:.4e}")]
    UnstableStep { dt: f64, max: f64 },

    #[error("assembly inconsistency: {0}")]
    Inconsistent(String),

    #[error("matrix cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
