//! Fitted frontier iteration: a network predicts each state's EPF inside its
//! follower value bounds and is trained towards the one-step backup of its
//! own frozen predictions.

pub mod bounds;
pub mod extract;
pub mod lookahead;
pub mod loss;
pub mod model;
pub mod optim;
pub mod replay;
pub mod train;

use crate::game::GameError;
use crate::plc::PlcError;
use crate::solver::SolveError;
use thiserror::Error;

pub use bounds::{approx_bounds_rc, AnalyticBounds, BoundsProvider, RcApproxBounds, TableBounds};
pub use extract::extract_policy;
pub use lookahead::{
    conform, lookahead_target, lookahead_with, measure_epsilon, ModelPredictor, PredictedSource, Predictor,
    TablePredictor,
};
pub use loss::LossKind;
pub use model::{EpfModel, ModelShape};
pub use train::{compute_loss, sample_trajectory, MetricsRow, Sampling, TrainConfig, Trainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Plc(#[from] PlcError),
    #[error(transparent)]
    Game(#[from] GameError),
}
