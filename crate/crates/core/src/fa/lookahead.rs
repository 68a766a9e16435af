//! One-step lookahead over predicted child frontiers.

use super::bounds::BoundsProvider;
use super::model::EpfModel;
use super::FaError;
use crate::game::{Game, Owner};
use crate::plc::{decreasing_part, linf_distance, Epf, Knot};
use crate::solver::{backup, FrontierSource, SolveError};
use std::collections::HashMap;
use std::hash::Hash;

/// Something that predicts the (decreasing part of the) EPF of a non-leaf
/// state inside given bounds.
pub trait Predictor<G: Game>: Sync {
    fn predict(&self, g: &G, s: &G::State, lo: f64, hi: f64) -> Result<Epf, FaError>;
}

/// Network predictions with either parameter set.
pub struct ModelPredictor<'a> {
    pub model: &'a EpfModel,
    pub use_target: bool,
}

impl<G: Game> Predictor<G> for ModelPredictor<'_> {
    fn predict(&self, g: &G, s: &G::State, lo: f64, hi: f64) -> Result<Epf, FaError> {
        let f = self.model.predict(&g.features(s), lo, hi, self.use_target)?;
        Ok(decreasing_part(&f))
    }
}

/// Fixed per-state frontiers (for example exact EPFs with injected noise).
pub struct TablePredictor<'a, S: Eq + Hash> {
    pub table: &'a HashMap<S, Epf>,
}

impl<G: Game> Predictor<G> for TablePredictor<'_, G::State> {
    fn predict(&self, _g: &G, s: &G::State, lo: f64, hi: f64) -> Result<Epf, FaError> {
        let f = self
            .table
            .get(s)
            .ok_or_else(|| FaError::Shape(format!("no frontier stored for {s:?}")))?;
        Ok(conform(&decreasing_part(f), lo, hi))
    }
}

/// Child frontiers: exact points at leaves, predictions elsewhere.
pub fn child_frontiers<G, B, P>(
    p: &P,
    g: &G,
    b: &B,
    children: &[G::State],
) -> Result<Vec<Epf>, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
    P: Predictor<G> + ?Sized,
{
    children
        .iter()
        .map(|c| {
            if g.owner(c) == Owner::Leaf {
                let (r1, r2) = g.payoffs(c);
                Ok(Epf::point(r2, r1))
            } else {
                let (lo, hi) = b.bounds(g, c);
                p.predict(g, c, lo, hi)
            }
        })
        .collect()
}

/// Restrict to `[lo, hi]`; a frontier that does not reach an end is
/// extended (flat on the left, along its last slope on the right).
pub fn conform(f: &Epf, lo: f64, hi: f64) -> Epf {
    let mut knots: Vec<Knot> = match f.restrict(lo, hi) {
        Some(r) => r.knots().to_vec(),
        None => {
            log::warn!("frontier [{}, {}] misses bounds [{lo}, {hi}]", f.lo(), f.hi());
            let y = if f.hi() < lo { f.eval(f.hi()) } else { f.eval(f.lo()) };
            return Epf::from_canonical(if hi > lo {
                vec![Knot::new(lo, y), Knot::new(hi, y)]
            } else {
                vec![Knot::new(lo, y)]
            });
        }
    };
    if knots[0].x > lo + crate::plc::TOL {
        log::warn!("frontier starts at {} above lower bound {lo}", knots[0].x);
        let y = knots[0].y;
        knots.insert(0, Knot::new(lo, y));
    }
    let last = knots[knots.len() - 1];
    if last.x < hi - crate::plc::TOL {
        log::warn!("frontier ends at {} below upper bound {hi}", last.x);
        let slope = if knots.len() >= 2 {
            let a = knots[knots.len() - 2];
            ((last.y - a.y) / (last.x - a.x)).min(0.0)
        } else {
            0.0
        };
        knots.push(Knot::new(hi, last.y + slope * (hi - last.x)));
    }
    crate::plc::make_epf(knots).expect("non-empty")
}

/// Backup at `s` over predicted children. A follower state whose children
/// are all truncated away falls back to the child with the best lower
/// value, untruncated.
pub fn backup_frontier<G, B, P>(p: &P, g: &G, b: &B, s: &G::State) -> Result<Epf, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
    P: Predictor<G> + ?Sized,
{
    let cs = g.children(s);
    let fs = child_frontiers(p, g, b, &cs)?;
    let taus = b.taus(g, s, &cs);
    match backup(g.owner(s), &fs, &taus, &g.chance_probs(s)) {
        Err(SolveError::Wipeout(_)) => {
            let lo: Vec<f64> = cs.iter().map(|c| b.bounds(g, c).0).collect();
            let best = crate::solver::grim_choice_from_lo(Owner::Follower, &lo);
            log::warn!("all children truncated at {s:?}; using child {best} untruncated");
            Ok(fs[best].clone())
        }
        other => Ok(other?),
    }
}

/// Training target at `s`: decreasing part of the backup of the children's
/// predictions, conformed to the state's bounds.
pub fn lookahead_with<G, B, P>(p: &P, g: &G, b: &B, s: &G::State) -> Result<Epf, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
    P: Predictor<G> + ?Sized,
{
    let (lo, hi) = b.bounds(g, s);
    let t = backup_frontier(p, g, b, s)?;
    Ok(conform(&decreasing_part(&t), lo, hi))
}

/// Target computed with the frozen parameters.
pub fn lookahead_target<G, B>(model: &EpfModel, g: &G, b: &B, s: &G::State) -> Result<Epf, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
{
    let p = ModelPredictor {
        model,
        use_target: true,
    };
    lookahead_with(&p, g, b, s)
}

/// Largest L-infinity gap between a prediction and its own one-step target
/// over the given non-leaf states.
pub fn measure_epsilon<G, B, P>(p: &P, g: &G, b: &B, states: &[G::State]) -> Result<f64, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
    P: Predictor<G> + ?Sized,
{
    let mut eps: f64 = 0.0;
    for s in states {
        if g.owner(s) == Owner::Leaf {
            continue;
        }
        let (lo, hi) = b.bounds(g, s);
        let pred = conform(&p.predict(g, s, lo, hi)?, lo, hi);
        let target = lookahead_with(p, g, b, s)?;
        eps = eps.max(linf_distance(&pred, &target)?);
    }
    Ok(eps)
}

/// Phase-2 frontier source backed by a predictor ("at least" semantics).
pub struct PredictedSource<'a, B: ?Sized, P: ?Sized> {
    pub bounds: &'a B,
    pub predictor: &'a P,
}

impl<G, B, P> FrontierSource<G> for PredictedSource<'_, B, P>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
    P: Predictor<G> + ?Sized,
{
    fn child_frontiers(&self, g: &G, _s: &G::State, children: &[G::State]) -> Result<Vec<Epf>, SolveError> {
        child_frontiers(self.predictor, g, self.bounds, children).map_err(|e| SolveError::Model(e.to_string()))
    }

    fn child_taus(&self, g: &G, s: &G::State, children: &[G::State]) -> Vec<f64> {
        self.bounds.taus(g, s, children)
    }

    fn grim_choice(&self, g: &G, s: &G::State, children: &[G::State]) -> usize {
        self.bounds.grim_choice(g, s, children)
    }

    fn at_least(&self) -> bool {
        true
    }
}
