//! Ground-truth checks for strategy profiles.
//!
//! Everything here is enumerative: expected payoffs by tree recursion,
//! follower best responses by backward induction, the incentive audit over
//! follower states, and a brute-force promise-lattice oracle that does not
//! share any frontier code with the solver.

use crate::game::{enumerate, Enumeration, Game, GameError, Owner, RcGame, TantrumGame, TantrumState};
use crate::solver::{
    bounds_from, child_taus, grim_choice_from_lo, Decision, StrategyProfile, ValueBounds,
    DEFAULT_STATE_BUDGET,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Supported actions whose slack is at least this are compliant.
pub const IC_SLACK_TOL: f64 = -1e-6;

/// Work units (pair evaluations) the lattice oracle may spend.
pub const ORACLE_WORK_BUDGET: u64 = 400_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("profile has no decision at reached state {0}")]
    MissingDecision(String),
    #[error("oracle lattice too large ({0} work units)")]
    TooLarge(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub state: String,
    pub action: usize,
    pub prob: f64,
    pub continuation: f64,
    pub threshold: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: Vec<ConstraintRecord>,
    pub compliant: bool,
    pub min_slack: f64,
    /// `(R1, R2)` at the root.
    pub payoffs: (f64, f64),
    pub epsilon: Option<f64>,
    pub bound_residual: Option<f64>,
}

impl AuditReport {
    pub fn violations(&self) -> impl Iterator<Item = &ConstraintRecord> {
        self.records.iter().filter(|r| r.slack < IC_SLACK_TOL)
    }
}

/// `(R1, R2)` at every state the profile covers, bottom-up over `e`.
/// States whose reached children lack decisions map to `None`.
pub fn profile_values<G: Game>(
    g: &G,
    e: &Enumeration<G::State>,
    p: &StrategyProfile<G::State>,
) -> HashMap<G::State, Option<(f64, f64)>> {
    let mut v: HashMap<G::State, Option<(f64, f64)>> = HashMap::with_capacity(e.len());
    for s in &e.order {
        let val = if g.owner(s) == Owner::Leaf {
            Some(g.payoffs(s))
        } else {
            p.get(s).and_then(|d| {
                let mut acc = (0.0, 0.0);
                for (c, &w) in e.children_of(s).iter().zip(&d.probs) {
                    if w > 0.0 {
                        let (a, b) = v[c]?;
                        acc.0 += w * a;
                        acc.1 += w * b;
                    }
                }
                Some(acc)
            })
        };
        v.insert(s.clone(), val);
    }
    v
}

/// Expected `(R1, R2)` from `s` following the profile, visiting only
/// supported actions.
pub fn expected_payoffs<G: Game>(
    g: &G,
    p: &StrategyProfile<G::State>,
    s: &G::State,
) -> Result<(f64, f64), VerifyError> {
    // post-order over the support
    let mut stack: Vec<(G::State, bool)> = vec![(s.clone(), false)];
    let mut values: HashMap<G::State, (f64, f64)> = HashMap::new();
    while let Some((t, done)) = stack.pop() {
        if g.owner(&t) == Owner::Leaf {
            values.insert(t.clone(), g.payoffs(&t));
            continue;
        }
        let d = p
            .get(&t)
            .ok_or_else(|| VerifyError::MissingDecision(format!("{t:?}")))?;
        let cs = g.children(&t);
        if done {
            let mut acc = (0.0, 0.0);
            for (c, &w) in cs.iter().zip(&d.probs) {
                if w > 0.0 {
                    let (a, b) = values[c];
                    acc.0 += w * a;
                    acc.1 += w * b;
                }
            }
            values.insert(t, acc);
        } else {
            stack.push((t.clone(), true));
            for (c, &w) in cs.into_iter().zip(&d.probs) {
                if w > 0.0 {
                    stack.push((c, false));
                }
            }
        }
    }
    Ok(values[s])
}

/// Follower best response to the leader/chance part of `leader_part`, with
/// ties broken toward the higher leader payoff. Returns the combined profile
/// and the follower value at `s`.
pub fn best_response<G: Game>(
    g: &G,
    leader_part: &StrategyProfile<G::State>,
    s: &G::State,
) -> Result<(StrategyProfile<G::State>, f64), VerifyError> {
    let e = enumerate(g, s, DEFAULT_STATE_BUDGET)?;
    let mut out = StrategyProfile::default();
    let mut v: HashMap<G::State, (f64, f64)> = HashMap::with_capacity(e.len());
    for t in &e.order {
        let cs = e.children_of(t);
        let val = match g.owner(t) {
            Owner::Leaf => g.payoffs(t),
            Owner::Follower => {
                let mut best = 0;
                for i in 1..cs.len() {
                    let (a, b) = v[&cs[i]];
                    let (ba, bb) = v[&cs[best]];
                    if b > bb + 1e-12 || ((b - bb).abs() <= 1e-12 && a > ba) {
                        best = i;
                    }
                }
                out.decisions.insert(t.clone(), Decision::pure(cs.len(), best));
                v[&cs[best]]
            }
            Owner::Leader | Owner::Chance => {
                let d = if g.owner(t) == Owner::Chance {
                    Decision {
                        probs: g.chance_probs(t),
                        promise: None,
                    }
                } else {
                    leader_part
                        .get(t)
                        .cloned()
                        .ok_or_else(|| VerifyError::MissingDecision(format!("{t:?}")))?
                };
                let mut acc = (0.0, 0.0);
                for (c, &w) in cs.iter().zip(&d.probs) {
                    acc.0 += w * v[c].0;
                    acc.1 += w * v[c].1;
                }
                out.decisions.insert(t.clone(), d);
                acc
            }
        };
        v.insert(t.clone(), val);
    }
    Ok((out, v[s].1))
}

/// Check every follower state covered by the profile against thresholds
/// produced by `taus(state, children)`.
pub fn audit_ic_with<G, T>(
    g: &G,
    p: &StrategyProfile<G::State>,
    taus: T,
) -> Result<AuditReport, VerifyError>
where
    G: Game,
    T: Fn(&G::State, &[G::State]) -> Vec<f64>,
{
    let root = g.root();
    let e = enumerate(g, &root, DEFAULT_STATE_BUDGET)?;
    let values = profile_values(g, &e, p);
    let mut records = Vec::new();
    for s in &e.order {
        if g.owner(s) != Owner::Follower {
            continue;
        }
        let Some(d) = p.get(s) else { continue };
        let cs = e.children_of(s);
        let th = taus(s, cs);
        for (i, c) in cs.iter().enumerate() {
            if d.probs[i] <= 0.0 {
                continue;
            }
            let cont = values[c]
                .ok_or_else(|| VerifyError::MissingDecision(format!("{c:?}")))?
                .1;
            records.push(ConstraintRecord {
                state: format!("{s:?}"),
                action: i,
                prob: d.probs[i],
                continuation: cont,
                threshold: th[i],
                slack: cont - th[i],
            });
        }
    }
    let min_slack = records.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let payoffs = values[&root].ok_or_else(|| VerifyError::MissingDecision("root".into()))?;
    Ok(AuditReport {
        compliant: min_slack >= IC_SLACK_TOL,
        min_slack,
        records,
        payoffs,
        epsilon: None,
        bound_residual: None,
    })
}

/// Audit with exact thresholds from grim values.
pub fn audit_ic<G: Game>(
    g: &G,
    p: &StrategyProfile<G::State>,
    b: &ValueBounds<G::State>,
) -> Result<AuditReport, VerifyError> {
    audit_ic_with(g, p, |s, cs| {
        let lo: Vec<f64> = cs.iter().map(|c| b.lo[c]).collect();
        child_taus(g.owner(s), &lo)
    })
}

/// `|R1 - reference| - 2 D eps`; non-positive certifies the error bound.
pub fn check_bound(r1: f64, reference: f64, depth: usize, eps: f64) -> f64 {
    (r1 - reference).abs() - 2.0 * depth as f64 * eps
}

/// Brute-force optimum over a promise lattice.
///
/// Each state gets a lattice made of `grid` evenly spaced points of
/// `[v_lo, v_hi]`, every leaf follower payoff below it, and every threshold
/// of its descendants and itself. On that lattice the "follower receives at
/// least mu" value is computed by explicit pair search at leader and
/// follower states (the latter restricted to promises meeting the child's
/// threshold) and by enumerating outcome combinations at chance states.
/// Returns `(OPT2, OPT1)`, with `OPT2` the largest lattice promise attaining
/// the maximum.
pub fn oracle_solve<G: Game>(g: &G, grid: usize) -> Result<(f64, f64), VerifyError> {
    let root = g.root();
    let e = enumerate(g, &root, DEFAULT_STATE_BUDGET)?;
    let b = bounds_from(g, &e);
    // thresholds keyed by child
    let mut tau: HashMap<G::State, f64> = HashMap::new();
    for s in &e.order {
        let cs = e.children_of(s);
        let lo: Vec<f64> = cs.iter().map(|c| b.lo[c]).collect();
        for (c, t) in cs.iter().zip(child_taus(g.owner(s), &lo)) {
            tau.insert(c.clone(), t);
        }
    }
    tau.insert(root.clone(), f64::NEG_INFINITY);

    let mut specials: HashMap<G::State, Vec<f64>> = HashMap::new();
    let mut tables: HashMap<G::State, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut work: u64 = 0;
    for s in &e.order {
        let cs = e.children_of(s);
        let (lo, hi) = b.get(s);
        let mut sp: Vec<f64> = Vec::new();
        if g.owner(s) == Owner::Leaf {
            sp.push(g.payoffs(s).1);
        }
        for c in cs {
            sp.extend(specials.remove(c).unwrap_or_default());
        }
        if tau[s].is_finite() {
            sp.push(tau[s]);
        }
        sort_dedup(&mut sp);
        let mut lattice: Vec<f64> = sp.iter().copied().filter(|&x| x >= lo - 1e-9 && x <= hi + 1e-9).collect();
        if grid >= 2 && hi > lo {
            lattice.extend((0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64));
        }
        lattice.push(lo);
        lattice.push(hi);
        for x in lattice.iter_mut() {
            *x = x.clamp(lo, hi);
        }
        sort_dedup(&mut lattice);

        let values = match g.owner(s) {
            Owner::Leaf => vec![g.payoffs(s).0],
            Owner::Leader | Owner::Follower => {
                let follower = g.owner(s) == Owner::Follower;
                let mut pts: Vec<(f64, f64)> = Vec::new();
                for c in cs {
                    let (xs, ys) = &tables[c];
                    let t = if follower { tau[c] } else { f64::NEG_INFINITY };
                    pts.extend(
                        xs.iter()
                            .zip(ys)
                            .filter(|(x, y)| **x >= t - 1e-9 && y.is_finite())
                            .map(|(x, y)| (*x, *y)),
                    );
                }
                work += (pts.len() as u64) * (pts.len() + lattice.len()) as u64;
                if work > ORACLE_WORK_BUDGET {
                    return Err(VerifyError::TooLarge(work));
                }
                pair_search(&mut pts, &lattice)
            }
            Owner::Chance => {
                let probs = g.chance_probs(s);
                let mut acc: Vec<(f64, f64)> = vec![(0.0, 0.0)];
                for (c, p) in cs.iter().zip(&probs) {
                    let (xs, ys) = &tables[c];
                    let mut next = Vec::with_capacity(acc.len() * xs.len());
                    for &(ax, ay) in &acc {
                        for (x, y) in xs.iter().zip(ys) {
                            if y.is_finite() {
                                next.push((ax + p * x, ay + p * y));
                            }
                        }
                    }
                    work += next.len() as u64;
                    if work > ORACLE_WORK_BUDGET {
                        return Err(VerifyError::TooLarge(work));
                    }
                    acc = pareto(next);
                }
                lattice
                    .iter()
                    .map(|&mu| {
                        acc.iter()
                            .filter(|(x, _)| *x >= mu - 1e-9)
                            .map(|&(_, y)| y)
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect()
            }
        };
        for c in cs {
            tables.remove(c);
        }
        specials.insert(s.clone(), sp);
        tables.insert(s.clone(), (lattice, values));
    }
    let (xs, ys) = &tables[&root];
    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let opt2 = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y >= best - 1e-9)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((opt2, best))
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| (*b - *a).abs() <= 1e-12);
}

/// Points not dominated in both coordinates, sorted by x.
fn pareto(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for p in pts {
        if p.1 > best {
            best = p.1;
            out.push(p);
        }
    }
    out.reverse();
    out
}

/// Best leader value at each lattice promise using one point or a two-point
/// mixture whose follower payoff is at least the promise.
fn pair_search(pts: &mut [(f64, f64)], lattice: &[f64]) -> Vec<f64> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let mut out = vec![f64::NEG_INFINITY; lattice.len()];
    // single points: suffix max of y
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1].max(pts[i].1);
    }
    let mut q = 0;
    for (k, &mu) in lattice.iter().enumerate() {
        while q < n && pts[q].0 < mu - 1e-12 {
            q += 1;
        }
        out[k] = suffix[q];
    }
    // mixtures of a left point below mu with a right point at or above it
    let mut best_slope = vec![f64::NEG_INFINITY; n + 1];
    for i in 0..n {
        let (xi, yi) = pts[i];
        best_slope[n] = f64::NEG_INFINITY;
        for j in (i + 1..n).rev() {
            let (xj, yj) = pts[j];
            let s = if xj > xi + 1e-12 {
                (yj - yi) / (xj - xi)
            } else {
                f64::NEG_INFINITY
            };
            best_slope[j] = best_slope[j + 1].max(s);
        }
        let mut j = i + 1;
        let start = lattice.partition_point(|&mu| mu <= xi + 1e-12);
        for (k, &mu) in lattice.iter().enumerate().skip(start) {
            while j < n && pts[j].0 < mu - 1e-12 {
                j += 1;
            }
            if j >= n {
                break;
            }
            let v = yi + best_slope[j] * (mu - xi);
            if v > out[k] {
                out[k] = v;
            }
        }
    }
    out
}

/// Pure subgame-perfect play on own payoffs; the follower breaks ties toward
/// the leader, the leader toward the first action.
pub fn spe_profile<G: Game>(g: &G) -> Result<StrategyProfile<G::State>, VerifyError> {
    let e = enumerate(g, &g.root(), DEFAULT_STATE_BUDGET)?;
    let mut v: HashMap<G::State, (f64, f64)> = HashMap::new();
    let mut p = StrategyProfile::default();
    for s in &e.order {
        let cs = e.children_of(s);
        let val = match g.owner(s) {
            Owner::Leaf => g.payoffs(s),
            Owner::Chance => {
                let pr = g.chance_probs(s);
                p.decisions.insert(
                    s.clone(),
                    Decision {
                        probs: pr.clone(),
                        promise: None,
                    },
                );
                cs.iter().zip(&pr).fold((0.0, 0.0), |a, (c, w)| (a.0 + w * v[c].0, a.1 + w * v[c].1))
            }
            owner => {
                let mut best = 0;
                for i in 1..cs.len() {
                    let (a, b) = v[&cs[i]];
                    let (ba, bb) = v[&cs[best]];
                    let better = if owner == Owner::Leader {
                        a > ba + 1e-12
                    } else {
                        b > bb + 1e-12 || ((b - bb).abs() <= 1e-12 && a > ba)
                    };
                    if better {
                        best = i;
                    }
                }
                p.decisions.insert(s.clone(), Decision::pure(cs.len(), best));
                v[&cs[best]]
            }
        };
        v.insert(s.clone(), val);
    }
    Ok(p)
}

/// Stages at which the greedy threat-budget plan asks the follower to accede.
///
/// Stage `j` is added when, for every planned accede stage `i` (including
/// `j`), the follower's remaining accede cost from `i` on stays within the
/// `n - i` tantrums it would suffer by refusing.
pub fn greedy_accede_plan(q2: &[f64]) -> Vec<bool> {
    let n = q2.len();
    let mut plan = vec![false; n];
    for j in 0..n {
        plan[j] = true;
        let ok = (0..=j).filter(|&i| plan[i]).all(|i| {
            let cost: f64 = (i..=j).filter(|&k| plan[k]).map(|k| q2[k]).sum();
            cost <= (n - i) as f64 + 1e-12
        });
        plan[j] = ok;
    }
    plan
}

/// Greedy featurized-tantrum baseline: follow the accede plan, keep the
/// peace after planned refusals, punish any deviation forever.
pub fn greedy_tantrum_profile(
    g: &TantrumGame,
    root: &TantrumState,
) -> Result<StrategyProfile<TantrumState>, VerifyError> {
    let plan = greedy_accede_plan(&root.params().q2);
    let e = enumerate(g, root, DEFAULT_STATE_BUDGET)?;
    let mut p = StrategyProfile::default();
    for s in &e.order {
        let owner = g.owner(s);
        if owner == Owner::Leaf {
            continue;
        }
        let j = s.stage();
        let on_path = (0..j).all(|k| {
            let o = s.outcome(k);
            if plan[k] {
                o == TantrumState::ACCEDE
            } else {
                o == TantrumState::PEACE
            }
        }) && !(s.is_leader_phase() && plan[j]);
        let cs = e.children_of(s);
        let choice = if on_path {
            match owner {
                Owner::Follower => usize::from(!plan[j]),
                _ => 0,
            }
        } else {
            let lo: Vec<f64> = cs.iter().map(|c| g.exact_bounds(c).unwrap().0).collect();
            grim_choice_from_lo(owner, &lo)
        };
        p.decisions.insert(s.clone(), Decision::pure(cs.len(), choice));
    }
    Ok(p)
}

/// Leader that walks to the richest adjacent unvisited `r1` cell while the
/// follower best-responds.
pub fn nonstrategic_rc_profile(
    g: &RcGame,
) -> Result<StrategyProfile<crate::game::RcState>, VerifyError> {
    let e = enumerate(g, &g.root(), DEFAULT_STATE_BUDGET)?;
    let mut leader = StrategyProfile::default();
    for s in &e.order {
        if g.owner(s) != Owner::Leader {
            continue;
        }
        let gain = |a: usize| {
            let cell = g.step(s.leader_pos(), a);
            if s.is_visited(cell) {
                0.0
            } else {
                g.r1_at(cell)
            }
        };
        let mut best = 0;
        for a in 1..crate::game::RC_ACTIONS.len() {
            if gain(a) > gain(best) {
                best = a;
            }
        }
        leader
            .decisions
            .insert(s.clone(), Decision::pure(crate::game::RC_ACTIONS.len(), best));
    }
    Ok(best_response(g, &leader, &g.root())?.0)
}
