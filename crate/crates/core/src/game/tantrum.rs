//! The repeated tantrum game.
//!
//! Each stage the follower either accedes, paying `q2` so the leader gains
//! `q1`, or refuses, after which the leader keeps the peace `(0, 0)` or throws
//! a tantrum `(-1, -1)`. Payoffs accumulate over `n` stages.

use super::{Game, GameError, Owner};
use crate::rng;
use rand::RngCore;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

const ACCEDE: u64 = 0;
const PEACE: u64 = 1;
const TANTRUM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TantrumParams {
    pub n: usize,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl TantrumParams {
    pub fn new(n: usize, q1: Vec<f64>, q2: Vec<f64>) -> Result<Self, GameError> {
        if n == 0 || n > 40 {
            return Err(GameError::BadParameter(format!("stage count {n} outside 1..=40")));
        }
        if q1.len() != n || q2.len() != n {
            return Err(GameError::BadParameter("q vectors must have one entry per stage".into()));
        }
        if q1.iter().any(|&q| !(q > 0.0)) || q2.iter().any(|&q| !(q >= 1.0)) {
            return Err(GameError::BadParameter("need q1 > 0 and q2 >= 1".into()));
        }
        Ok(TantrumParams { n, q1, q2 })
    }

    pub fn constant(n: usize, q1: f64, q2: f64) -> Result<Self, GameError> {
        Self::new(n, vec![q1; n], vec![q2; n])
    }
}

/// Position in a tantrum game: completed stage outcomes (base-3 digits) and
/// whether the leader is about to respond to a refusal.
#[derive(Debug, Clone)]
pub struct TantrumState {
    params: Arc<TantrumParams>,
    outcomes: u64,
    stage: u8,
    leader_phase: bool,
    acc: (f64, f64),
    moves: u8,
}

impl PartialEq for TantrumState {
    fn eq(&self, other: &Self) -> bool {
        self.outcomes == other.outcomes
            && self.stage == other.stage
            && self.leader_phase == other.leader_phase
            && (Arc::ptr_eq(&self.params, &other.params) || self.params == other.params)
    }
}

impl Eq for TantrumState {}

impl Hash for TantrumState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.outcomes.hash(h);
        self.stage.hash(h);
        self.leader_phase.hash(h);
    }
}

impl TantrumState {
    pub fn params(&self) -> &TantrumParams {
        &self.params
    }

    pub fn stage(&self) -> usize {
        self.stage as usize
    }

    pub fn is_leader_phase(&self) -> bool {
        self.leader_phase
    }

    /// Payoffs collected so far `(leader, follower)`.
    pub fn collected(&self) -> (f64, f64) {
        self.acc
    }

    /// Outcome of completed stage `j`: 0 accede, 1 peace, 2 tantrum.
    pub fn outcome(&self, j: usize) -> u64 {
        (self.outcomes / 3u64.pow(j as u32)) % 3
    }

    fn counts(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for j in 0..self.stage() {
            c[self.outcome(j) as usize] += 1.0;
        }
        c
    }

    fn advance(&self, outcome: u64) -> TantrumState {
        let j = self.stage();
        let p = &self.params;
        let delta = match outcome {
            ACCEDE => (p.q1[j], -p.q2[j]),
            PEACE => (0.0, 0.0),
            _ => (-1.0, -1.0),
        };
        TantrumState {
            params: Arc::clone(&self.params),
            outcomes: self.outcomes + outcome * 3u64.pow(j as u32),
            stage: self.stage + 1,
            leader_phase: false,
            acc: (self.acc.0 + delta.0, self.acc.1 + delta.1),
            moves: self.moves + 1,
        }
    }
}

/// Tantrum game over a fixed instance, optionally describing the featurized
/// family whose `q` vectors are redrawn per episode.
#[derive(Debug, Clone)]
pub struct TantrumGame {
    base: Arc<TantrumParams>,
    family_shift: Option<f64>,
}

pub fn build_tantrum(n: usize, q1: Vec<f64>, q2: Vec<f64>) -> Result<TantrumGame, GameError> {
    Ok(TantrumGame {
        base: Arc::new(TantrumParams::new(n, q1, q2)?),
        family_shift: None,
    })
}

/// Unit-rate exponential draws plus `shift` for both `q` vectors.
pub fn sample_featurized_q(n: usize, shift: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed, rng::streams::TANTRUM_Q);
    draw_q(&mut r, n, shift)
}

fn draw_q(r: &mut dyn RngCore, n: usize, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || -> Vec<f64> {
        (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(r);
                e + shift
            })
            .collect()
    };
    let q1 = draw();
    let q2 = draw();
    (q1, q2)
}

impl TantrumGame {
    pub fn new(params: TantrumParams) -> Self {
        TantrumGame {
            base: Arc::new(params),
            family_shift: None,
        }
    }

    /// Featurized family: `q` vectors are part of the features and
    /// [`Game::sample_root`] draws a fresh instance with `Exp(1) + shift` entries.
    pub fn featurized(params: TantrumParams, shift: f64) -> Result<Self, GameError> {
        if !(shift >= 1.0) {
            return Err(GameError::BadParameter(format!("shift must be >= 1, got {shift}")));
        }
        Ok(TantrumGame {
            base: Arc::new(params),
            family_shift: Some(shift),
        })
    }

    pub fn params(&self) -> &TantrumParams {
        &self.base
    }

    pub fn is_featurized(&self) -> bool {
        self.family_shift.is_some()
    }

    pub fn family_shift(&self) -> Option<f64> {
        self.family_shift
    }

    /// Same family, different instance.
    pub fn with_params(&self, params: TantrumParams) -> Self {
        TantrumGame {
            base: Arc::new(params),
            family_shift: self.family_shift,
        }
    }

    pub fn root_of(&self, params: Arc<TantrumParams>) -> TantrumState {
        TantrumState {
            params,
            outcomes: 0,
            stage: 0,
            leader_phase: false,
            acc: (0.0, 0.0),
            moves: 0,
        }
    }
}

impl Game for TantrumGame {
    type State = TantrumState;

    fn root(&self) -> TantrumState {
        self.root_of(Arc::clone(&self.base))
    }

    fn sample_root(&self, rng: &mut dyn RngCore) -> TantrumState {
        match self.family_shift {
            None => self.root(),
            Some(shift) => {
                let n = self.base.n;
                let (q1, q2) = draw_q(rng, n, shift);
                self.root_of(Arc::new(TantrumParams { n, q1, q2 }))
            }
        }
    }

    fn owner(&self, s: &TantrumState) -> Owner {
        if s.stage() >= s.params.n {
            Owner::Leaf
        } else if s.leader_phase {
            Owner::Leader
        } else {
            Owner::Follower
        }
    }

    fn children(&self, s: &TantrumState) -> Vec<TantrumState> {
        match self.owner(s) {
            Owner::Leaf | Owner::Chance => Vec::new(),
            Owner::Follower => {
                let mut refuse = s.clone();
                refuse.leader_phase = true;
                refuse.moves += 1;
                vec![s.advance(ACCEDE), refuse]
            }
            Owner::Leader => vec![s.advance(PEACE), s.advance(TANTRUM)],
        }
    }

    fn action_labels(&self, s: &TantrumState) -> Vec<String> {
        let labels: &[&str] = match self.owner(s) {
            Owner::Follower => &["accede", "refuse"],
            Owner::Leader => &["peace", "tantrum"],
            _ => &[],
        };
        labels.iter().map(|l| l.to_string()).collect()
    }

    fn payoffs(&self, s: &TantrumState) -> (f64, f64) {
        s.acc
    }

    fn features(&self, s: &TantrumState) -> Vec<f64> {
        let n = s.params.n as f64;
        let mut f = Vec::with_capacity(self.feature_dim());
        f.extend(s.counts().iter().map(|c| c / n));
        let owner = self.owner(s);
        f.push((owner == Owner::Follower) as u8 as f64);
        f.push((owner == Owner::Leader) as u8 as f64);
        if self.is_featurized() {
            f.extend_from_slice(&s.params.q1);
            f.extend_from_slice(&s.params.q2);
            f.push(s.acc.0 / n);
            f.push(s.acc.1 / n);
        }
        f
    }

    fn feature_dim(&self) -> usize {
        if self.is_featurized() {
            5 + 2 * self.base.n + 2
        } else {
            5
        }
    }

    fn depth(&self, s: &TantrumState) -> usize {
        s.moves as usize
    }

    fn max_depth(&self) -> usize {
        2 * self.base.n
    }

    fn exact_bounds(&self, s: &TantrumState) -> Option<(f64, f64)> {
        let remaining = (s.params.n - s.stage()) as f64;
        Some((s.acc.1 - remaining, s.acc.1))
    }
}

impl TantrumState {
    /// Outcome codes, exposed for path-replay checks.
    pub const ACCEDE: u64 = ACCEDE;
    pub const PEACE: u64 = PEACE;
    pub const TANTRUM: u64 = TANTRUM;
}
