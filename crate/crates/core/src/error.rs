use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("iteration diverged after {iters} steps (deviation {deviation:e})")]
    Divergence { iters: usize, deviation: f64 },
    #[error("forward trace does not belong to the current network parameters")]
    StaleTrace,
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("gradient norm {norm:e} is too small to define a direction")]
    DegenerateGradient { norm: f64 },
    #[error("correlation undefined: one series has zero variance")]
    UndefinedCorrelation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
