//! Exact SEFCE computation by backward induction over payoff frontiers.
//!
//! Phase 1 computes grim/altruistic follower values and every state's EPF
//! bottom-up. Phase 2 walks down from the root, splitting the current promise
//! over at most two children (or over all outcomes at chance states) and
//! records the grim continuation everywhere off the extracted path.

use crate::game::{enumerate, Enumeration, Game, GameError, GameTree, Owner};
use crate::plc::{
    decompose, envelope, make_epf, max_convolve, split_convolution, truncate, Epf, PlcError, TOL,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::Hash;
use thiserror::Error;

/// State budget used when a caller does not pass one.
pub const DEFAULT_STATE_BUDGET: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Plc(#[from] PlcError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("every child of a follower state was truncated away at {0}")]
    Wipeout(String),
    #[error("frontier model: {0}")]
    Model(String),
    #[error("promise {mu} outside the frontier domain [{lo}, {hi}] at {state}")]
    PromiseOutOfDomain {
        state: String,
        mu: f64,
        lo: f64,
        hi: f64,
    },
}

/// Grim (`lo`) and altruistic (`hi`) follower values per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBounds<S: Eq + Hash> {
    pub lo: HashMap<S, f64>,
    pub hi: HashMap<S, f64>,
}

impl<S: Eq + Hash> ValueBounds<S> {
    pub fn get(&self, s: &S) -> (f64, f64) {
        (self.lo[s], self.hi[s])
    }
}

/// Recommendation at one state: a distribution over children plus the
/// follower payoff promised on arrival (absent off the extracted path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub probs: Vec<f64>,
    pub promise: Option<f64>,
}

impl Decision {
    pub fn pure(n: usize, choice: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[choice] = 1.0;
        Decision {
            probs,
            promise: None,
        }
    }

    pub fn support(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile<S: Eq + Hash> {
    pub decisions: HashMap<S, Decision>,
}

impl<S: Eq + Hash> Default for StrategyProfile<S> {
    fn default() -> Self {
        StrategyProfile {
            decisions: HashMap::new(),
        }
    }
}

impl<S: Eq + Hash> StrategyProfile<S> {
    pub fn get(&self, s: &S) -> Option<&Decision> {
        self.decisions.get(s)
    }

    pub fn probs(&self, s: &S) -> Option<&[f64]> {
        self.decisions.get(s).map(|d| d.probs.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<S: Eq + Hash> {
    pub root: S,
    pub bounds: ValueBounds<S>,
    pub epfs: HashMap<S, Epf>,
    pub profile: StrategyProfile<S>,
    /// `(OPT2, OPT1)`: the smallest maximiser of the root EPF and its value.
    pub opt: (f64, f64),
    /// Promise actually used at the root during extraction.
    pub root_promise: f64,
}

/// Grim/altruistic values from an enumeration.
pub fn bounds_from<G: Game>(g: &G, e: &Enumeration<G::State>) -> ValueBounds<G::State> {
    let mut lo = HashMap::with_capacity(e.len());
    let mut hi = HashMap::with_capacity(e.len());
    for s in &e.order {
        let cs = e.children_of(s);
        let (l, h) = match g.owner(s) {
            Owner::Leaf => {
                let r2 = g.payoffs(s).1;
                (r2, r2)
            }
            Owner::Leader => (
                cs.iter().map(|c| lo[c]).fold(f64::INFINITY, f64::min),
                cs.iter().map(|c| hi[c]).fold(f64::NEG_INFINITY, f64::max),
            ),
            Owner::Follower => (
                cs.iter().map(|c| lo[c]).fold(f64::NEG_INFINITY, f64::max),
                cs.iter().map(|c| hi[c]).fold(f64::NEG_INFINITY, f64::max),
            ),
            Owner::Chance => {
                let p = g.chance_probs(s);
                (
                    cs.iter().zip(&p).map(|(c, w)| w * lo[c]).sum(),
                    cs.iter().zip(&p).map(|(c, w)| w * hi[c]).sum(),
                )
            }
        };
        lo.insert(s.clone(), l);
        hi.insert(s.clone(), h);
    }
    ValueBounds { lo, hi }
}

pub fn compute_bounds<G: Game>(g: &G) -> Result<ValueBounds<G::State>, SolveError> {
    let e = enumerate(g, &g.root(), DEFAULT_STATE_BUDGET)?;
    Ok(bounds_from(g, &e))
}

/// Minimum required incentive for each child of a state: the best grim value
/// among its siblings at follower states, `-inf` everywhere else.
pub fn child_taus(owner: Owner, child_lo: &[f64]) -> Vec<f64> {
    if owner != Owner::Follower {
        return vec![f64::NEG_INFINITY; child_lo.len()];
    }
    (0..child_lo.len())
        .map(|i| {
            child_lo
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Threshold for one node of an explicit tree.
pub fn compute_tau(g: &GameTree, b: &ValueBounds<usize>, child: usize) -> f64 {
    let Some(p) = g.parent(child) else {
        return f64::NEG_INFINITY;
    };
    if g.owner(&p) != Owner::Follower {
        return f64::NEG_INFINITY;
    }
    g.children(&p)
        .into_iter()
        .filter(|&c| c != child)
        .map(|c| b.lo[&c])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Backup sources after truncation: `None` marks a child whose frontier lies
/// entirely below its threshold.
pub fn truncated_sources(owner: Owner, children: &[Epf], taus: &[f64]) -> Vec<Option<Epf>> {
    match owner {
        Owner::Follower => children.iter().zip(taus).map(|(f, &t)| truncate(f, t)).collect(),
        _ => children.iter().cloned().map(Some).collect(),
    }
}

/// One application of the frontier recursion at a state.
pub fn backup(
    owner: Owner,
    children: &[Epf],
    taus: &[f64],
    probs: &[f64],
) -> Result<Epf, SolveError> {
    match owner {
        Owner::Leaf => Err(SolveError::Game(GameError::Malformed("backup at a leaf".into()))),
        Owner::Chance => {
            let weighted: Vec<(f64, Epf)> = probs.iter().copied().zip(children.iter().cloned()).collect();
            Ok(max_convolve(&weighted)?)
        }
        Owner::Leader => Ok(envelope(children)?),
        Owner::Follower => {
            let kept: Vec<Epf> = truncated_sources(owner, children, taus).into_iter().flatten().collect();
            if kept.is_empty() {
                return Err(SolveError::Wipeout("follower state".into()));
            }
            Ok(envelope(&kept)?)
        }
    }
}

/// Phase 1: every state's EPF, bottom-up.
pub fn solve_epfs<G: Game>(
    g: &G,
    e: &Enumeration<G::State>,
    b: &ValueBounds<G::State>,
) -> Result<HashMap<G::State, Epf>, SolveError> {
    let mut epfs: HashMap<G::State, Epf> = HashMap::with_capacity(e.len());
    for s in &e.order {
        let owner = g.owner(s);
        let f = if owner == Owner::Leaf {
            let (r1, r2) = g.payoffs(s);
            Epf::point(r2, r1)
        } else {
            let cs = e.children_of(s);
            let fs: Vec<Epf> = cs.iter().map(|c| epfs[c].clone()).collect();
            let lo: Vec<f64> = cs.iter().map(|c| b.lo[c]).collect();
            let taus = child_taus(owner, &lo);
            backup(owner, &fs, &taus, &g.chance_probs(s)).map_err(|err| match err {
                SolveError::Wipeout(_) => SolveError::Wipeout(format!("{s:?}")),
                other => other,
            })?
        };
        epfs.insert(s.clone(), f);
    }
    Ok(epfs)
}

/// Where Phase 2 gets the frontiers it splits promises over.
pub trait FrontierSource<G: Game> {
    /// Frontiers of `children` (in child units) for the backup at `s`.
    fn child_frontiers(
        &self,
        g: &G,
        s: &G::State,
        children: &[G::State],
    ) -> Result<Vec<Epf>, SolveError>;

    /// Thresholds applied to the children of `s`.
    fn child_taus(&self, g: &G, s: &G::State, children: &[G::State]) -> Vec<f64>;

    /// Child chosen at `s` off the extracted path: the leader punishes, the
    /// follower replies as well as the punishment allows.
    fn grim_choice(&self, g: &G, s: &G::State, children: &[G::State]) -> usize;

    /// When set, frontiers mean "follower gets at least mu" and promises may
    /// be raised to the frontier's maximiser.
    fn at_least(&self) -> bool {
        false
    }
}

/// Exact frontiers from a Phase 1 table.
pub struct ExactSource<'a, S: Eq + Hash> {
    pub epfs: &'a HashMap<S, Epf>,
    pub bounds: &'a ValueBounds<S>,
}

/// Punishing child from grim values.
pub fn grim_choice_from_lo(owner: Owner, lo: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in lo.iter().enumerate() {
        let better = match owner {
            Owner::Leader => v < lo[best],
            _ => v > lo[best],
        };
        if better {
            best = i;
        }
    }
    best
}

impl<G: Game> FrontierSource<G> for ExactSource<'_, G::State> {
    fn child_frontiers(
        &self,
        _g: &G,
        _s: &G::State,
        children: &[G::State],
    ) -> Result<Vec<Epf>, SolveError> {
        Ok(children.iter().map(|c| self.epfs[c].clone()).collect())
    }

    fn child_taus(&self, g: &G, s: &G::State, children: &[G::State]) -> Vec<f64> {
        let lo: Vec<f64> = children.iter().map(|c| self.bounds.lo[c]).collect();
        child_taus(g.owner(s), &lo)
    }

    fn grim_choice(&self, g: &G, s: &G::State, children: &[G::State]) -> usize {
        let lo: Vec<f64> = children.iter().map(|c| self.bounds.lo[c]).collect();
        grim_choice_from_lo(g.owner(s), &lo)
    }
}

/// Frontier at `s` as seen by a source (one backup over its children).
pub fn source_frontier<G: Game, F: FrontierSource<G>>(
    g: &G,
    src: &F,
    s: &G::State,
) -> Result<Epf, SolveError> {
    let owner = g.owner(s);
    if owner == Owner::Leaf {
        let (r1, r2) = g.payoffs(s);
        return Ok(Epf::point(r2, r1));
    }
    let cs = g.children(s);
    let fs = src.child_frontiers(g, s, &cs)?;
    let taus = src.child_taus(g, s, &cs);
    backup(owner, &fs, &taus, &g.chance_probs(s))
}

/// Phase 2 from an arbitrary frontier source.
///
/// Returns the profile and the promise used at the root. With
/// `fill_off_path`, every state not reached by the extraction receives its
/// grim continuation so the profile is total.
pub fn extract_with<G: Game, F: FrontierSource<G>>(
    g: &G,
    src: &F,
    root: &G::State,
    mu_root: Option<f64>,
    fill_off_path: bool,
) -> Result<(StrategyProfile<G::State>, f64), SolveError> {
    let mut profile = StrategyProfile::default();
    let root_mu = match mu_root {
        Some(mu) => mu,
        None => source_frontier(g, src, root)?.argmax().0,
    };
    let mut used_root = root_mu;
    let mut stack: Vec<(G::State, Option<f64>)> = vec![(root.clone(), Some(root_mu))];
    while let Some((s, promise)) = stack.pop() {
        let owner = g.owner(&s);
        if owner == Owner::Leaf {
            continue;
        }
        let cs = g.children(&s);
        let Some(mu_in) = promise else {
            if !fill_off_path {
                continue;
            }
            let d = if owner == Owner::Chance {
                Decision {
                    probs: g.chance_probs(&s),
                    promise: None,
                }
            } else {
                Decision::pure(cs.len(), src.grim_choice(g, &s, &cs))
            };
            for c in cs {
                stack.push((c, None));
            }
            profile.decisions.insert(s, d);
            continue;
        };
        let fs = src.child_frontiers(g, &s, &cs)?;
        let taus = src.child_taus(g, &s, &cs);
        let probs = g.chance_probs(&s);
        let t = backup(owner, &fs, &taus, &probs).map_err(|err| match err {
            SolveError::Wipeout(_) => SolveError::Wipeout(format!("{s:?}")),
            other => other,
        })?;
        let (lo, hi) = t.domain();
        let mut mu = mu_in;
        if src.at_least() {
            mu = mu.max(t.argmax().0);
        }
        if mu < lo - 1e-7 || mu > hi + 1e-7 {
            return Err(SolveError::PromiseOutOfDomain {
                state: format!("{s:?}"),
                mu,
                lo,
                hi,
            });
        }
        let mu = mu.clamp(lo, hi);
        if s == *root {
            used_root = mu;
        }
        let mut child_promise: Vec<Option<f64>> = vec![None; cs.len()];
        let decision_probs = if owner == Owner::Chance {
            let weighted: Vec<(f64, Epf)> = probs.iter().copied().zip(fs.iter().cloned()).collect();
            let split = split_convolution(&weighted, mu)?;
            for (slot, x) in child_promise.iter_mut().zip(split) {
                *slot = Some(x);
            }
            probs
        } else {
            let sources = truncated_sources(owner, &fs, &taus);
            let index: Vec<usize> = (0..cs.len()).filter(|&i| sources[i].is_some()).collect();
            let kept: Vec<Epf> = sources.into_iter().flatten().collect();
            let d = decompose(&kept, &t, mu)?;
            let (li, ri) = (index[d.left_index], index[d.right_index]);
            let mut p = vec![0.0; cs.len()];
            if li == ri {
                p[li] = 1.0;
                child_promise[li] = Some(d.t * d.mu_left + (1.0 - d.t) * d.mu_right);
            } else {
                // degenerate weights collapse onto one child
                if d.t > TOL {
                    p[li] += d.t;
                    child_promise[li] = Some(d.mu_left);
                }
                if 1.0 - d.t > TOL {
                    p[ri] += 1.0 - d.t;
                    child_promise[ri] = Some(d.mu_right);
                }
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= total);
            }
            p
        };
        for (c, pr) in cs.into_iter().zip(child_promise) {
            stack.push((c, pr));
        }
        profile.decisions.insert(
            s,
            Decision {
                probs: decision_probs,
                promise: Some(mu),
            },
        );
    }
    Ok((profile, used_root))
}

/// Phase 2 on exact frontiers.
pub fn extract_strategy<G: Game>(
    g: &G,
    epfs: &HashMap<G::State, Epf>,
    b: &ValueBounds<G::State>,
    mu2_root: Option<f64>,
) -> Result<StrategyProfile<G::State>, SolveError> {
    let root = g.root();
    let src = ExactSource { epfs, bounds: b };
    if let Some(mu) = mu2_root {
        let f = &epfs[&root];
        if !f.contains(mu) {
            return Err(PlcError::OutOfDomain {
                mu,
                lo: f.lo(),
                hi: f.hi(),
            }
            .into());
        }
    }
    Ok(extract_with(g, &src, &root, mu2_root, true)?.0)
}

/// Solve the game rooted at `root` with an explicit state budget.
pub fn solve_from<G: Game>(
    g: &G,
    root: &G::State,
    budget: usize,
) -> Result<SolveResult<G::State>, SolveError> {
    let e = enumerate(g, root, budget)?;
    let bounds = bounds_from(g, &e);
    let epfs = solve_epfs(g, &e, &bounds)?;
    let opt = epfs[root].argmax();
    let src = ExactSource {
        epfs: &epfs,
        bounds: &bounds,
    };
    let (profile, root_promise) = extract_with(g, &src, root, Some(opt.0), true)?;
    Ok(SolveResult {
        root: root.clone(),
        bounds,
        epfs,
        profile,
        opt,
        root_promise,
    })
}

/// Full two-phase solve from the game's root.
pub fn solve<G: Game>(g: &G) -> Result<SolveResult<G::State>, SolveError> {
    solve_from(g, &g.root(), DEFAULT_STATE_BUDGET)
}

/// EPF through arbitrary knots; convenience for tests and fixtures.
pub fn epf_from(points: &[(f64, f64)]) -> Epf {
    make_epf(points.iter().copied()).expect("non-empty point list")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_fig1, build_fig6, build_promise_game, build_tantrum, NodeSpec};

    fn knots(f: &Epf) -> Vec<(f64, f64)> {
        f.knots().iter().map(|k| (k.x, k.y)).collect()
    }

    #[test]
    fn fig1_bounds_and_taus() {
        let g = build_fig1(0.0, 0.0);
        let b = compute_bounds(&g).unwrap();
        assert_eq!(b.get(&1), (-1.0, 1.0));
        assert_eq!(b.get(&4), (0.0, 0.0));
        assert_eq!(compute_tau(&g, &b, 1), 0.0);
        assert_eq!(compute_tau(&g, &b, 4), -1.0);
        assert_eq!(compute_tau(&g, &b, 2), f64::NEG_INFINITY);
        assert_eq!(compute_tau(&g, &b, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn fig1_solution() {
        let g = build_fig1(0.0, 0.0);
        let r = solve(&g).unwrap();
        assert_eq!(knots(&r.epfs[&1]), vec![(-1.0, 10.0), (1.0, -1.0)]);
        assert_eq!(knots(&r.epfs[&0]), vec![(0.0, 4.5), (1.0, -1.0)]);
        assert_eq!(r.opt, (0.0, 4.5));
        assert_eq!(r.profile.probs(&0).unwrap(), &[1.0, 0.0]);
        let mix = r.profile.probs(&1).unwrap();
        assert!((mix[0] - 0.5).abs() < 1e-12 && (mix[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unfulfillable_fixture_segment() {
        let g = build_promise_game(-10.0, -1.0, 0.1).unwrap();
        let r = solve(&g).unwrap();
        let sp = knots(&r.epfs[&1]);
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[0], (-1.0, 10.0));
        assert!((sp[1].0 - 0.9).abs() < 1e-12 && sp[1].1 == -1.0);
    }

    #[test]
    fn chance_root_of_two_points() {
        let leaf = |r: (f64, f64)| NodeSpec {
            owner: Owner::Leaf,
            children: vec![],
            labels: vec![],
            probs: vec![],
            payoffs: Some(r),
            features: vec![],
        };
        let root = NodeSpec {
            owner: Owner::Chance,
            children: vec![1, 2],
            labels: vec![],
            probs: vec![0.5, 0.5],
            payoffs: None,
            features: vec![],
        };
        let g = GameTree::new(vec![root, leaf((0.0, 0.0)), leaf((2.0, 2.0))]).unwrap();
        let r = solve(&g).unwrap();
        assert_eq!(knots(&r.epfs[&0]), vec![(1.0, 1.0)]);
        assert_eq!(r.profile.probs(&0).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn fig6_epf() {
        let g = build_fig6();
        let r = solve(&g).unwrap();
        assert_eq!(knots(&r.epfs[&4]), vec![(0.0, 0.0), (0.5, 4.0)]);
        assert_eq!(knots(&r.epfs[&0]), vec![(0.0, 4.5), (0.5, 4.0), (1.0, -1.0)]);
        assert!(r.opt.1 >= 4.0);
    }

    #[test]
    fn tantrum_three_stages() {
        let g = build_tantrum(3, vec![1.0; 3], vec![2.0; 3]).unwrap();
        let r = solve(&g).unwrap();
        assert!((r.opt.1 - 1.5).abs() < 1e-9, "{:?}", r.opt);
        let single = build_tantrum(1, vec![1.0], vec![2.0]).unwrap();
        let b = compute_bounds(&single).unwrap();
        assert_eq!(b.get(&single.root()), (-1.0, 0.0));
    }

    #[test]
    fn out_of_domain_root_promise() {
        let g = build_fig1(0.0, 0.0);
        let r = solve(&g).unwrap();
        let err = extract_strategy(&g, &r.epfs, &r.bounds, Some(5.0)).unwrap_err();
        assert!(matches!(err, SolveError::Plc(PlcError::OutOfDomain { .. })));
    }

    #[test]
    fn grim_choices() {
        assert_eq!(grim_choice_from_lo(Owner::Leader, &[1.0, -2.0, 0.0]), 1);
        assert_eq!(grim_choice_from_lo(Owner::Follower, &[1.0, -2.0, 3.0]), 2);
        assert_eq!(child_taus(Owner::Follower, &[1.0, -2.0, 3.0]), vec![3.0, 3.0, 1.0]);
        assert_eq!(child_taus(Owner::Leader, &[1.0]), vec![f64::NEG_INFINITY]);
        assert_eq!(child_taus(Owner::Follower, &[1.0]), vec![f64::NEG_INFINITY]);
    }
}
