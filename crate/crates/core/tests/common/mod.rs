//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls the library's envelope, truncation or convolution
//! code; the oracles enumerate candidate points directly.

#![allow(dead_code)]

use rand::Rng;
use sefce_core::fa::model::EpfModel;
use sefce_core::fa::train::accumulate_state;
use sefce_core::fa::{BoundsProvider, LossKind};
use sefce_core::game::{Game, Owner};
use sefce_core::plc::make_epf;
use sefce_core::{Epf, StrategyProfile};
use std::collections::HashMap;

/// Random concave EPF on `[lo, hi]` with up to `max(k, 2)` knots (a point
/// when the domain is degenerate). With `coarse`,
/// coordinates are snapped to quarters so ties and collinear runs appear.
pub fn random_epf<R: Rng>(rng: &mut R, lo: f64, hi: f64, k: usize, coarse: bool) -> Epf {
    let snap = |v: f64| if coarse { (v * 4.0).round() / 4.0 } else { v };
    if hi - lo < 1e-6 {
        return Epf::point(lo, snap(rng.random_range(-10.0..10.0)));
    }
    let mut xs: Vec<f64> = (0..k.saturating_sub(2)).map(|_| snap(rng.random_range(lo..hi)).clamp(lo, hi)).collect();
    xs.push(lo);
    xs.push(hi);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut slopes: Vec<f64> = (1..xs.len()).map(|_| snap(rng.random_range(-5.0..5.0))).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    let mut y = snap(rng.random_range(-10.0..10.0));
    let mut pts = vec![(xs[0], y)];
    for (w, s) in xs.windows(2).zip(&slopes) {
        y += s * (w[1] - w[0]);
        pts.push((w[1], y));
    }
    make_epf(pts).expect("non-empty")
}

/// Random EPF with a random domain inside `[-5, 5]`; a single point about
/// a sixth of the time.
pub fn random_domain_epf<R: Rng>(rng: &mut R, coarse: bool) -> Epf {
    let a: f64 = rng.random_range(-5.0..5.0);
    let b: f64 = rng.random_range(-5.0..5.0);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (lo, hi) = if coarse {
        ((lo * 4.0).round() / 4.0, (hi * 4.0).round() / 4.0)
    } else {
        (lo, hi)
    };
    let k = rng.random_range(1..=6);
    if k == 1 {
        return random_epf(rng, lo, lo, 1, coarse);
    }
    random_epf(rng, lo, hi, k, coarse)
}

/// Value at `x` of the least concave majorant of a point cloud: the best
/// chord (or point) between two cloud points spanning `x`.
pub fn hull_value(pts: &[(f64, f64)], x: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &(ax, ay) in pts {
        for &(bx, by) in pts {
            if ax <= x && x <= bx {
                let v = if bx - ax < 1e-15 {
                    ay.max(by)
                } else {
                    ay + (by - ay) * (x - ax) / (bx - ax)
                };
                best = best.max(v);
            }
        }
    }
    best
}

/// Evenly spaced sample of `[lo, hi]` plus the given extra abscissae.
pub fn grid(lo: f64, hi: f64, n: usize, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n)
        .map(|i| if n == 1 { lo } else { (lo + (hi - lo) * i as f64 / (n - 1) as f64).min(hi) })
        .collect();
    xs.extend(extra.into_iter().filter(|x| (lo..=hi).contains(x)));
    xs
}

/// Max-convolution value at `mu` by vertex enumeration: at an optimum all
/// children but one sit on a knot, and the free one absorbs the remainder.
pub fn convolution_value(weighted: &[(f64, Epf)], mu: f64) -> f64 {
    let n = weighted.len();
    let mut best = f64::NEG_INFINITY;
    for free in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != free).collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut x_sum = 0.0;
            let mut y_sum = 0.0;
            for (slot, &i) in others.iter().enumerate() {
                let (p, f) = &weighted[i];
                let k = f.knots()[idx[slot]];
                x_sum += p * k.x;
                y_sum += p * k.y;
            }
            let (p, f) = &weighted[free];
            let x = (mu - x_sum) / p;
            if x >= f.lo() - 1e-9 && x <= f.hi() + 1e-9 {
                best = best.max(y_sum + p * f.eval(x.clamp(f.lo(), f.hi())));
            }
            let mut slot = 0;
            loop {
                if slot == others.len() {
                    break;
                }
                idx[slot] += 1;
                if idx[slot] < weighted[others[slot]].1.len() {
                    break;
                }
                idx[slot] = 0;
                slot += 1;
            }
            if slot == others.len() {
                break;
            }
        }
    }
    best
}

/// Probability that the profile reaches each state from the root.
pub fn reach_probs<G: Game>(g: &G, p: &StrategyProfile<G::State>) -> HashMap<G::State, f64> {
    let mut out: HashMap<G::State, f64> = HashMap::new();
    let mut stack = vec![(g.root(), 1.0)];
    while let Some((s, w)) = stack.pop() {
        *out.entry(s.clone()).or_insert(0.0) += w;
        if g.owner(&s) == Owner::Leaf || w == 0.0 {
            continue;
        }
        let cs = g.children(&s);
        let probs = if g.owner(&s) == Owner::Chance {
            g.chance_probs(&s)
        } else {
            p.probs(&s).expect("total profile").to_vec()
        };
        for (c, q) in cs.into_iter().zip(probs) {
            if q > 0.0 {
                stack.push((c, w * q));
            }
        }
    }
    out
}

/// Outcome of a finite-difference sweep over every online parameter.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdStats {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl FdStats {
    pub fn merge(&mut self, o: FdStats) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
    }

    pub fn skip_fraction(&self) -> f64 {
        self.skipped as f64 / (self.checked + self.skipped).max(1) as f64
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare the analytic gradient of one state's loss with central
/// differences of step `h`. A coordinate whose central estimate disagrees
/// is skipped when its one-sided slopes also disagree (a kink inside the
/// stencil); otherwise it counts towards the error.
pub fn fd_check_state<G, B>(model: &EpfModel, g: &G, b: &B, s: &G::State, kind: LossKind, h: f64) -> FdStats
where
    G: Game,
    B: BoundsProvider<G>,
{
    let mut grad = vec![0.0; model.online.len()];
    let l0 = accumulate_state(model, g, b, s, kind, Some(&mut grad)).expect("loss");
    let mut m = model.clone();
    let mut stats = FdStats::default();
    let loss_at = |m: &mut EpfModel, i: usize, v: f64| {
        let keep = m.online[i];
        m.online[i] = v;
        let l = accumulate_state(m, g, b, s, kind, None).expect("loss");
        m.online[i] = keep;
        l
    };
    for i in 0..grad.len() {
        let theta = model.online[i];
        let lp = loss_at(&mut m, i, theta + h);
        let lm = loss_at(&mut m, i, theta - h);
        let central = (lp - lm) / (2.0 * h);
        let e = rel_err(grad[i], central);
        if e <= 1e-3 {
            stats.checked += 1;
            stats.max_rel_err = stats.max_rel_err.max(e);
            continue;
        }
        let right = (lp - l0) / h;
        let left = (l0 - lm) / h;
        if rel_err(right, left) > 1e-3 {
            stats.skipped += 1;
        } else {
            stats.checked += 1;
            stats.max_rel_err = stats.max_rel_err.max(e);
        }
    }
    stats
}
