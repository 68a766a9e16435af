//! Resource collection on a `J x J` grid.
//!
//! Both players start in the centre cell and alternate moves (leader first)
//! for `n` rounds. Entering a cell nobody has visited yet adds its resources
//! to a shared pool; the leader is paid the pooled `r1`, the follower the
//! pooled `r2`.

use super::{Game, GameError, Grid, Owner};
use std::hash::{Hash, Hasher};

pub const RC_ACTIONS: [&str; 5] = ["stay", "north", "south", "east", "west"];
const MAX_CELLS: usize = 128;
const BITS_PER_MOVE: u32 = 3;

#[derive(Debug, Clone)]
pub struct RcGame {
    j: usize,
    n: usize,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

/// A node of the RC tree, identified by its action history.
#[derive(Debug, Clone)]
pub struct RcState {
    history: u64,
    moves: u8,
    lpos: u8,
    fpos: u8,
    visited: u128,
    collected: (f64, f64),
}

impl PartialEq for RcState {
    fn eq(&self, other: &Self) -> bool {
        self.history == other.history && self.moves == other.moves
    }
}

impl Eq for RcState {}

impl Hash for RcState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.history.hash(h);
        self.moves.hash(h);
    }
}

impl RcState {
    pub fn moves(&self) -> usize {
        self.moves as usize
    }

    pub fn leader_pos(&self) -> usize {
        self.lpos as usize
    }

    pub fn follower_pos(&self) -> usize {
        self.fpos as usize
    }

    pub fn is_visited(&self, cell: usize) -> bool {
        self.visited >> cell & 1 == 1
    }

    pub fn visited_mask(&self) -> u128 {
        self.visited
    }

    pub fn collected(&self) -> (f64, f64) {
        self.collected
    }

    pub fn leader_to_move(&self) -> bool {
        self.moves % 2 == 0
    }
}

pub fn build_rc(j: usize, n: usize, r1: &Grid, r2: &Grid) -> Result<RcGame, GameError> {
    if j % 2 == 0 || j * j > MAX_CELLS {
        return Err(GameError::BadParameter(format!(
            "grid side must be odd and at most 11, got {j}"
        )));
    }
    if n == 0 || 2 * n as u32 * BITS_PER_MOVE > 64 {
        return Err(GameError::BadParameter(format!("round count {n} outside 1..=10")));
    }
    let flat = |g: &Grid, name: &str| -> Result<Vec<f64>, GameError> {
        if g.len() != j || g.iter().any(|row| row.len() != j) {
            return Err(GameError::BadParameter(format!("{name} must be {j}x{j}")));
        }
        let v: Vec<f64> = g.iter().flatten().copied().collect();
        if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(GameError::BadParameter(format!("{name} has negative or non-finite cells")));
        }
        Ok(v)
    };
    Ok(RcGame {
        j,
        n,
        r1: flat(r1, "r1")?,
        r2: flat(r2, "r2")?,
    })
}

impl RcGame {
    pub fn side(&self) -> usize {
        self.j
    }

    pub fn rounds(&self) -> usize {
        self.n
    }

    pub fn r1_map(&self) -> Grid {
        self.r1.chunks(self.j).map(<[f64]>::to_vec).collect()
    }

    pub fn r2_map(&self) -> Grid {
        self.r2.chunks(self.j).map(<[f64]>::to_vec).collect()
    }

    pub fn r1_at(&self, cell: usize) -> f64 {
        self.r1[cell]
    }

    pub fn r2_at(&self, cell: usize) -> f64 {
        self.r2[cell]
    }

    pub fn center(&self) -> usize {
        (self.j / 2) * self.j + self.j / 2
    }

    /// Cell reached by `action` from `cell`; moves off the grid become stays.
    pub fn step(&self, cell: usize, action: usize) -> usize {
        let (row, col) = (cell / self.j, cell % self.j);
        let j = self.j;
        match action {
            1 if row > 0 => cell - j,
            2 if row + 1 < j => cell + j,
            3 if col + 1 < j => cell + 1,
            4 if col > 0 => cell - 1,
            _ => cell,
        }
    }

    /// State after the player to move takes `action`.
    pub fn apply(&self, s: &RcState, action: usize) -> RcState {
        let mover_leader = s.leader_to_move();
        let from = if mover_leader { s.lpos } else { s.fpos } as usize;
        let to = self.step(from, action);
        let mut t = s.clone();
        t.history |= (action as u64) << (BITS_PER_MOVE * s.moves as u32);
        t.moves += 1;
        if mover_leader {
            t.lpos = to as u8;
        } else {
            t.fpos = to as u8;
        }
        if !s.is_visited(to) {
            t.visited |= 1u128 << to;
            t.collected.0 += self.r1[to];
            t.collected.1 += self.r2[to];
        }
        t
    }

    pub fn is_terminal(&self, s: &RcState) -> bool {
        s.moves as usize >= 2 * self.n
    }
}

impl Game for RcGame {
    type State = RcState;

    fn root(&self) -> RcState {
        let c = self.center();
        RcState {
            history: 0,
            moves: 0,
            lpos: c as u8,
            fpos: c as u8,
            visited: 1u128 << c,
            collected: (self.r1[c], self.r2[c]),
        }
    }

    fn owner(&self, s: &RcState) -> Owner {
        if self.is_terminal(s) {
            Owner::Leaf
        } else if s.leader_to_move() {
            Owner::Leader
        } else {
            Owner::Follower
        }
    }

    fn children(&self, s: &RcState) -> Vec<RcState> {
        if self.is_terminal(s) {
            return Vec::new();
        }
        (0..RC_ACTIONS.len()).map(|a| self.apply(s, a)).collect()
    }

    fn action_labels(&self, s: &RcState) -> Vec<String> {
        if self.is_terminal(s) {
            return Vec::new();
        }
        RC_ACTIONS.iter().map(|a| a.to_string()).collect()
    }

    fn payoffs(&self, s: &RcState) -> (f64, f64) {
        s.collected
    }

    fn features(&self, s: &RcState) -> Vec<f64> {
        let cells = self.j * self.j;
        let mut f = Vec::with_capacity(self.feature_dim());
        f.extend((0..cells).map(|c| s.is_visited(c) as u8 as f64));
        let scale = (self.j - 1).max(1) as f64;
        for p in [s.lpos as usize, s.fpos as usize] {
            f.push((p / self.j) as f64 / scale);
            f.push((p % self.j) as f64 / scale);
        }
        let terminal = self.is_terminal(s);
        f.push((!terminal && s.leader_to_move()) as u8 as f64);
        f.push((!terminal && !s.leader_to_move()) as u8 as f64);
        f.push(s.collected.0);
        f.push(s.collected.1);
        f.push((self.n - s.moves as usize / 2) as f64 / self.n as f64);
        f
    }

    fn feature_dim(&self) -> usize {
        self.j * self.j + 9
    }

    fn depth(&self, s: &RcState) -> usize {
        s.moves as usize
    }

    fn max_depth(&self) -> usize {
        2 * self.n
    }
}
