use thiserror::Error;

use crate::data::IdxError;
use crate::effort::EffortError;
use crate::network::checkpoint::CheckpointError;
use crate::numerics::ShapeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Effort(#[from] EffortError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("target is not one-hot: {0}")]
    NotOneHot(String),
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
