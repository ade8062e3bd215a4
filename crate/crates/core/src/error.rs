use thiserror::Error;

/// Errors raised by the training and sensitivity pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid label {label} at example {index}")]
    InvalidLabel { index: usize, label: i64 },

    #[error("feature norm {norm} exceeds 1 at example {index}")]
    FeatureNorm { index: usize, norm: f64 },

    #[error("invalid {name}: {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("unknown loss kind `{0}`")]
    UnknownLoss(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("non-finite value encountered during {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (diagnosed minimum eigenvalue {min_eigen:e})")]
    NotPositiveDefinite { min_eigen: f64 },

    #[error("perturbation was not materialized from the model's own noise draw and budget")]
    NoiseMismatch,

    #[error("model was trained in sgd_repro mode; pass allow_non_stationary to use it")]
    NonStationaryModel,

    #[error("utility locally insensitive to epsilon (slope {0:e})")]
    InsensitiveUtility(f64),

    #[error("expected utility unreachable: implied epsilon {0} is not positive")]
    Unreachable(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { name, value })
    }
}

pub(crate) fn unit_open(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain { name, value })
    }
}
