//! Evaluation of extracted policies: payoffs, incentive audit, error-bound
//! residuals and the ratio to the optimum against baselines.

use crate::fa::lookahead::{backup_frontier, measure_epsilon, ModelPredictor};
use crate::fa::{extract_policy, BoundsProvider, EpfModel, FaError};
use crate::game::{enumerate, sample_featurized_q, Game, GameError, Owner, TantrumGame, TantrumParams};
use crate::solver::{solve, SolveError, StrategyProfile};
use crate::verify::{
    audit_ic_with, check_bound, expected_payoffs, greedy_tantrum_profile, AuditReport, VerifyError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// States enumerated when measuring epsilon over a whole game.
pub const EPSILON_STATE_LIMIT: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Fa(#[from] FaError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub name: String,
    pub r1: f64,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub audit: AuditReport,
    pub r1: f64,
    pub r2: f64,
    /// Exact `(OPT2, OPT1)` when the game was solved.
    pub opt: Option<(f64, f64)>,
    /// `R1 / OPT1`.
    pub kappa: Option<f64>,
    /// `OPT1 - R1`.
    pub delta_opt: Option<f64>,
    pub baselines: Vec<BaselineReport>,
}

/// Per-instance comparison on a featurized family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub opt1: f64,
    pub model_r1: f64,
    pub kappa: f64,
    pub greedy_r1: f64,
    pub greedy_kappa: f64,
    pub compliant: bool,
}

pub fn kappa(r1: f64, opt1: f64) -> Option<f64> {
    (opt1.abs() > 1e-12).then(|| r1 / opt1)
}

/// Payoffs and audit of `profile`, compared with `opt` when given.
pub fn evaluate_profile<G: Game>(
    g: &G,
    profile: &StrategyProfile<G::State>,
    taus: impl Fn(&G::State, &[G::State]) -> Vec<f64>,
    opt: Option<(f64, f64)>,
) -> Result<EvalReport, EvalError> {
    let audit = audit_ic_with(g, profile, taus)?;
    let (r1, r2) = expected_payoffs(g, profile, &g.root())?;
    Ok(EvalReport {
        audit,
        r1,
        r2,
        opt,
        kappa: opt.and_then(|o| kappa(r1, o.1)),
        delta_opt: opt.map(|o| o.1 - r1),
        baselines: Vec::new(),
    })
}

/// Extract the model's policy, audit it against the provider's thresholds
/// and certify the error bound. Epsilon is measured over `eps_states`, or
/// over the whole game when that fits in [`EPSILON_STATE_LIMIT`]. The bound
/// reference is the exact optimum when `solve_exact` is set and the learned
/// root value otherwise.
pub fn evaluate_model<G, B>(
    model: &EpfModel,
    g: &G,
    b: &B,
    solve_exact: bool,
    eps_states: Option<&[G::State]>,
) -> Result<EvalReport, EvalError>
where
    G: Game,
    B: BoundsProvider<G>,
{
    let root = g.root();
    let (profile, _) = extract_policy(model, g, b, &root, None)?;
    let opt = if solve_exact { Some(solve(g)?.opt) } else { None };
    let mut report = evaluate_profile(g, &profile, |s, cs| b.taus(g, s, cs), opt)?;
    let p = ModelPredictor {
        model,
        use_target: false,
    };
    let eps = match eps_states {
        Some(states) => Some(measure_epsilon(&p, g, b, states)?),
        None => match enumerate(g, &root, EPSILON_STATE_LIMIT) {
            Ok(e) => Some(measure_epsilon(&p, g, b, &e.order)?),
            Err(_) => None,
        },
    };
    if let Some(eps) = eps {
        let reference = match opt {
            Some(o) => o.1,
            None if g.owner(&root) == Owner::Leaf => g.payoffs(&root).0,
            None => backup_frontier(&p, g, b, &root)?.max_value(),
        };
        report.audit.epsilon = Some(eps);
        report.audit.bound_residual = Some(check_bound(report.r1, reference, g.max_depth(), eps));
    }
    Ok(report)
}

/// Model and greedy-baseline ratios on held-out instances of a featurized
/// Tantrum family.
pub fn featurized_instances<B>(
    model: &EpfModel,
    family: &TantrumGame,
    instances: &[TantrumParams],
    b: &B,
) -> Result<Vec<InstanceReport>, EvalError>
where
    B: BoundsProvider<TantrumGame>,
{
    instances
        .iter()
        .map(|params| {
            let g = family.with_params(params.clone());
            let root = g.root();
            let opt1 = solve(&g)?.opt.1;
            let (profile, _) = extract_policy(model, &g, b, &root, None)?;
            let audit = audit_ic_with(&g, &profile, |s, cs| b.taus(&g, s, cs))?;
            let model_r1 = expected_payoffs(&g, &profile, &root)?.0;
            let greedy = greedy_tantrum_profile(&g, &root)?;
            let greedy_r1 = expected_payoffs(&g, &greedy, &root)?.0;
            Ok(InstanceReport {
                q1: params.q1.clone(),
                q2: params.q2.clone(),
                opt1,
                model_r1,
                kappa: kappa(model_r1, opt1).unwrap_or(1.0),
                greedy_r1,
                greedy_kappa: kappa(greedy_r1, opt1).unwrap_or(1.0),
                compliant: audit.compliant,
            })
        })
        .collect()
}

/// `count` held-out instances of a featurized Tantrum family. Their seeds
/// are derived from `seed` and never coincide with the training stream.
pub fn held_out(n: usize, shift: f64, seed: u64, count: usize) -> Result<Vec<TantrumParams>, GameError> {
    (0..count as u64)
        .map(|i| {
            let (q1, q2) = sample_featurized_q(n, shift, seed ^ 0x5eed_0000_0000_0000 ^ i);
            TantrumParams::new(n, q1, q2)
        })
        .collect()
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
