//! Finite two-player perfect-information games with chance.
//!
//! Solvers and trainers talk to games through [`Game`], so small fixtures
//! stored as an explicit [`GameTree`] and huge generated games whose children
//! are computed on demand share one interface.

mod gp;
mod rc;
mod tantrum;
mod tree;

pub use gp::{sample_gp_maps, Grid};
pub use rc::{build_rc, RcGame, RcState, RC_ACTIONS};
pub use tantrum::{build_tantrum, sample_featurized_q, TantrumGame, TantrumParams, TantrumState};
pub use tree::{build_fig1, build_fig6, build_promise_game, random_tree, GameTree, NodeSpec};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Leader,
    Follower,
    Chance,
    Leaf,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("game has more than {0} states")]
    TooLarge(usize),
}

/// A perfect-information game. States are cheap value keys; children are
/// recomputed on request, so implementations may be lazy.
pub trait Game: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn root(&self) -> Self::State;

    /// Root of a freshly drawn instance for games that describe a family.
    fn sample_root(&self, _rng: &mut dyn RngCore) -> Self::State {
        self.root()
    }

    fn owner(&self, s: &Self::State) -> Owner;

    /// Children in a fixed action order. Empty at leaves.
    fn children(&self, s: &Self::State) -> Vec<Self::State>;

    fn action_labels(&self, s: &Self::State) -> Vec<String> {
        (0..self.children(s).len()).map(|i| format!("a{i}")).collect()
    }

    /// Child probabilities at chance states; empty elsewhere.
    fn chance_probs(&self, _s: &Self::State) -> Vec<f64> {
        Vec::new()
    }

    /// `(leader, follower)` payoffs at a leaf.
    fn payoffs(&self, s: &Self::State) -> (f64, f64);

    fn features(&self, s: &Self::State) -> Vec<f64>;

    fn feature_dim(&self) -> usize;

    /// Number of moves from the root.
    fn depth(&self, s: &Self::State) -> usize;

    /// Longest root-to-leaf path length.
    fn max_depth(&self) -> usize;

    /// Closed-form `(grim, altruistic)` follower values when the game knows them.
    fn exact_bounds(&self, _s: &Self::State) -> Option<(f64, f64)> {
        None
    }
}

/// Every state reachable from `root` in post-order, with cached child lists.
#[derive(Debug, Clone)]
pub struct Enumeration<S> {
    pub order: Vec<S>,
    pub children: HashMap<S, Vec<S>>,
}

impl<S: Clone + Eq + Hash> Enumeration<S> {
    pub fn children_of(&self, s: &S) -> &[S] {
        self.children.get(s).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Iterative post-order walk; fails once more than `budget` states are seen.
pub fn enumerate<G: Game>(
    g: &G,
    root: &G::State,
    budget: usize,
) -> Result<Enumeration<G::State>, GameError> {
    let mut order = Vec::new();
    let mut children = HashMap::new();
    let mut stack: Vec<(G::State, bool)> = vec![(root.clone(), false)];
    let mut seen = 0usize;
    while let Some((s, expanded)) = stack.pop() {
        if expanded {
            order.push(s);
            continue;
        }
        seen += 1;
        if seen > budget {
            return Err(GameError::TooLarge(budget));
        }
        let cs = g.children(&s);
        stack.push((s.clone(), true));
        for c in cs.iter().rev() {
            stack.push((c.clone(), false));
        }
        children.insert(s, cs);
    }
    Ok(Enumeration { order, children })
}

/// Number of leaves below each state of an enumeration.
pub fn leaf_counts<S: Clone + Eq + Hash>(e: &Enumeration<S>) -> HashMap<S, usize> {
    let mut out: HashMap<S, usize> = HashMap::with_capacity(e.len());
    for s in &e.order {
        let cs = e.children_of(s);
        let n = if cs.is_empty() {
            1
        } else {
            cs.iter().map(|c| out[c]).sum()
        };
        out.insert(s.clone(), n);
    }
    out
}

/// Structural checks: chance distributions, leaf payoffs, feature width.
pub fn validate<G: Game>(g: &G, e: &Enumeration<G::State>) -> Result<(), GameError> {
    for s in &e.order {
        let cs = e.children_of(s);
        let owner = g.owner(s);
        if (owner == Owner::Leaf) != cs.is_empty() {
            return Err(GameError::Malformed(format!(
                "{s:?}: owner {owner:?} with {} children",
                cs.len()
            )));
        }
        if owner == Owner::Chance {
            let p = g.chance_probs(s);
            let sum: f64 = p.iter().sum();
            if p.len() != cs.len() || p.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(GameError::Malformed(format!("{s:?}: bad chance distribution {p:?}")));
            }
        }
        if owner == Owner::Leaf {
            let (a, b) = g.payoffs(s);
            if !a.is_finite() || !b.is_finite() {
                return Err(GameError::Malformed(format!("{s:?}: non-finite payoffs")));
            }
        }
        if g.features(s).len() != g.feature_dim() {
            return Err(GameError::Malformed(format!("{s:?}: feature width mismatch")));
        }
    }
    Ok(())
}
