//! Follower value bounds used by the learned model: exact tables, closed
//! forms, or the heuristic resource-collection bounds.

use crate::game::{Game, Owner, RcGame, RcState};
use crate::solver::{child_taus, grim_choice_from_lo, ValueBounds};
use std::collections::HashMap;
use std::hash::Hash;
use std::sync::RwLock;

/// Source of `(lower, upper)` follower values, thresholds and the punishing
/// off-path choice.
pub trait BoundsProvider<G: Game>: Sync {
    fn bounds(&self, g: &G, s: &G::State) -> (f64, f64);

    fn taus(&self, g: &G, s: &G::State, children: &[G::State]) -> Vec<f64> {
        let lo: Vec<f64> = children.iter().map(|c| self.bounds(g, c).0).collect();
        child_taus(g.owner(s), &lo)
    }

    fn grim_choice(&self, g: &G, s: &G::State, children: &[G::State]) -> usize {
        let lo: Vec<f64> = children.iter().map(|c| self.bounds(g, c).0).collect();
        grim_choice_from_lo(g.owner(s), &lo)
    }

    fn is_approximate(&self) -> bool {
        false
    }
}

/// Exact bounds from a precomputed table.
pub struct TableBounds<S: Eq + Hash> {
    pub table: ValueBounds<S>,
}

impl<G: Game> BoundsProvider<G> for TableBounds<G::State> {
    fn bounds(&self, _g: &G, s: &G::State) -> (f64, f64) {
        self.table.get(s)
    }
}

/// Exact bounds from the game's own closed form.
pub struct AnalyticBounds;

impl<G: Game> BoundsProvider<G> for AnalyticBounds {
    fn bounds(&self, g: &G, s: &G::State) -> (f64, f64) {
        g.exact_bounds(s).expect("game provides closed-form bounds")
    }
}

/// Heuristic bounds for resource collection.
///
/// The lower value assumes the leader stays put forever and the follower
/// best-responds (found by search). The upper value searches all joint moves
/// while fewer than `exact_depth` moves have been played and then rolls out
/// a greedy plan in which each mover steps to the neighbouring (or current)
/// cell with the most uncollected `r2`. The upper value is clamped to at
/// least the lower one.
pub struct RcApproxBounds {
    pub exact_depth: usize,
    under: RwLock<HashMap<Key, f64>>,
    tilde: RwLock<HashMap<Key, f64>>,
}

/// Subgame identity: positions, visited set and move count.
type Key = (u8, u8, u128, u8);

fn key(s: &RcState) -> Key {
    (s.leader_pos() as u8, s.follower_pos() as u8, s.visited_mask(), s.moves() as u8)
}

impl RcApproxBounds {
    pub fn new(exact_depth: usize) -> Self {
        RcApproxBounds {
            exact_depth,
            under: RwLock::new(HashMap::new()),
            tilde: RwLock::new(HashMap::new()),
        }
    }

    /// Follower resource gained when the player to move takes `action`.
    fn gain(g: &RcGame, s: &RcState, action: usize) -> f64 {
        let from = if s.leader_to_move() { s.leader_pos() } else { s.follower_pos() };
        let c = g.step(from, action);
        if s.is_visited(c) {
            0.0
        } else {
            g.r2_at(c)
        }
    }

    /// Follower gain still to come under the stay-put leader. Cached values
    /// exclude what has been collected, so states sharing a key agree
    /// exactly.
    fn under_future(&self, g: &RcGame, s: &RcState) -> f64 {
        if g.is_terminal(s) {
            return 0.0;
        }
        let k = key(s);
        if let Some(&v) = self.under.read().unwrap().get(&k) {
            return v;
        }
        let v = if s.leader_to_move() {
            Self::gain(g, s, 0) + self.under_future(g, &g.apply(s, 0))
        } else {
            (0..5)
                .map(|a| Self::gain(g, s, a) + self.under_future(g, &g.apply(s, a)))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        self.under.write().unwrap().insert(k, v);
        v
    }

    fn greedy_rollout(&self, g: &RcGame, s: &RcState) -> f64 {
        let mut t = s.clone();
        let mut total = 0.0;
        while !g.is_terminal(&t) {
            let mut best = 0;
            for a in 1..5 {
                if Self::gain(g, &t, a) > Self::gain(g, &t, best) {
                    best = a;
                }
            }
            total += Self::gain(g, &t, best);
            t = g.apply(&t, best);
        }
        total
    }

    fn raw_tilde_future(&self, g: &RcGame, s: &RcState) -> f64 {
        if g.is_terminal(s) {
            return 0.0;
        }
        if s.moves() >= self.exact_depth {
            return self.greedy_rollout(g, s);
        }
        (0..5)
            .map(|a| Self::gain(g, s, a) + self.tilde_future(g, &g.apply(s, a)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn tilde_future(&self, g: &RcGame, s: &RcState) -> f64 {
        let k = key(s);
        if let Some(&v) = self.tilde.read().unwrap().get(&k) {
            return v;
        }
        let v = self.raw_tilde_future(g, s).max(self.under_future(g, s));
        self.tilde.write().unwrap().insert(k, v);
        v
    }

    /// Follower best-response value against a leader that never moves.
    pub fn v_under(&self, g: &RcGame, s: &RcState) -> f64 {
        s.collected().1 + self.under_future(g, s)
    }

    /// Clamped heuristic altruistic value.
    pub fn v_tilde(&self, g: &RcGame, s: &RcState) -> f64 {
        s.collected().1 + self.tilde_future(g, s)
    }

    /// `(v_under, v_tilde)` before clamping, for inspection.
    pub fn unclamped(&self, g: &RcGame, s: &RcState) -> (f64, f64) {
        (self.v_under(g, s), s.collected().1 + self.raw_tilde_future(g, s))
    }
}

impl BoundsProvider<RcGame> for RcApproxBounds {
    fn bounds(&self, g: &RcGame, s: &RcState) -> (f64, f64) {
        (self.v_under(g, s), self.v_tilde(g, s))
    }

    fn grim_choice(&self, g: &RcGame, s: &RcState, children: &[RcState]) -> usize {
        match g.owner(s) {
            Owner::Leader => 0,
            _ => {
                let lo: Vec<f64> = children.iter().map(|c| self.v_under(g, c)).collect();
                grim_choice_from_lo(Owner::Follower, &lo)
            }
        }
    }

    fn is_approximate(&self) -> bool {
        true
    }
}

/// `(v_under, v_tilde, tau_tilde)` of an RC state given its parent (for the
/// sibling-based threshold).
pub fn approx_bounds_rc(
    g: &RcGame,
    b: &RcApproxBounds,
    parent: Option<&RcState>,
    s: &RcState,
) -> (f64, f64, f64) {
    let (lo, hi) = b.bounds(g, s);
    let tau = match parent {
        Some(p) if g.owner(p) == Owner::Follower => g
            .children(p)
            .iter()
            .filter(|c| *c != s)
            .map(|c| b.v_under(g, c))
            .fold(f64::NEG_INFINITY, f64::max),
        _ => f64::NEG_INFINITY,
    };
    (lo, hi, tau)
}
