//! Policies read off a learned frontier by one-step lookahead.

use super::bounds::BoundsProvider;
use super::lookahead::{ModelPredictor, PredictedSource};
use super::model::EpfModel;
use super::FaError;
use crate::game::Game;
use crate::solver::{extract_with, StrategyProfile};

/// Phase-2 extraction over the online model's predictions. Returns the
/// profile (total: off-path states get grim choices) and the root promise.
pub fn extract_policy<G, B>(
    model: &EpfModel,
    g: &G,
    bounds: &B,
    root: &G::State,
    mu2_root: Option<f64>,
) -> Result<(StrategyProfile<G::State>, f64), FaError>
where
    G: Game,
    B: BoundsProvider<G>,
{
    let predictor = ModelPredictor {
        model,
        use_target: false,
    };
    let src = PredictedSource {
        bounds,
        predictor: &predictor,
    };
    Ok(extract_with(g, &src, root, mu2_root, true)?)
}
