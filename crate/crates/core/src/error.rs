use thiserror::Error;

use crate::symbolic::EvalError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("metric of '{manifold}' is not positive definite at {point:?}")]
    NotPositiveDefinite { manifold: String, point: Vec<f64> },
    #[error("point {point:?} leaves the chart of '{manifold}'")]
    ChartExit { manifold: String, point: Vec<f64> },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("embedding differential is rank deficient at {point:?}")]
    RankDeficient { point: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
