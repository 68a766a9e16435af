//! Piecewise-linear concave functions of follower payoff.
//!
//! An [`Epf`] maps a follower payoff `mu2` to the best leader payoff that can
//! be enforced while delivering exactly `mu2`. It is stored as a list of knots
//! strictly increasing in `x`, interpolated linearly, and is `-inf` outside
//! `[x_first, x_last]`.
//!
//! The operators here are the whole backup algebra: upper concave envelope,
//! left truncation, maximal convolution (chance nodes), plus the loss
//! functions and the decreasing-part transform used by the fitted trainer.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Absolute tolerance for knot deduplication, concavity slack and domain tests.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlcError {
    #[error("cannot build an EPF from an empty point list")]
    EmptyEpf,
    #[error("chance probabilities must be positive and sum to 1 (got sum {0})")]
    BadDistribution(f64),
    #[error("payoff {mu} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { mu: f64, lo: f64, hi: f64 },
    #[error("domains differ: [{0}, {1}] vs [{2}, {3}]")]
    DomainMismatch(f64, f64, f64, f64),
    #[error("malformed knot line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub x: f64,
    pub y: f64,
}

impl Knot {
    pub fn new(x: f64, y: f64) -> Self {
        Knot { x, y }
    }
}

impl From<(f64, f64)> for Knot {
    fn from((x, y): (f64, f64)) -> Self {
        Knot { x, y }
    }
}

/// Enforceable payoff frontier: a piecewise-linear concave function, `-inf`
/// off its closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epf {
    knots: Vec<Knot>,
}

/// How a point of an envelope is obtained from at most two source functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub left_index: usize,
    pub right_index: usize,
    /// Weight on the left source; `1 - t` goes to the right one.
    pub t: f64,
    pub mu_left: f64,
    pub mu_right: f64,
}

impl Decomposition {
    pub fn is_single(&self) -> bool {
        self.left_index == self.right_index && (self.mu_left - self.mu_right).abs() <= TOL
    }
}

/// Sort, merge x-duplicates (keeping the higher y) and drop every point that
/// is on or below the upper concave envelope. Returns the surviving knots and
/// the index of the input point each one came from.
pub(crate) fn canonicalize_indexed(points: &[(f64, f64)]) -> (Vec<Knot>, Vec<usize>) {
    let dedup = sorted_dedup(points);
    let mut hull: Vec<usize> = Vec::with_capacity(dedup.len());
    for &i in &dedup {
        while hull.len() >= 2 {
            let a = points[hull[hull.len() - 2]];
            let b = points[hull[hull.len() - 1]];
            if on_or_below_chord(a, b, points[i]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let knots = hull.iter().map(|&i| Knot::from(points[i])).collect();
    (knots, hull)
}

/// Indices of `points` sorted by x with near-equal x merged to the max-y member.
fn sorted_dedup(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[b].1.total_cmp(&points[a].1))
            .then(a.cmp(&b))
    });
    let mut out: Vec<usize> = Vec::with_capacity(order.len());
    let mut group_x = f64::NEG_INFINITY;
    for i in order {
        let (x, y) = points[i];
        match out.last_mut() {
            Some(last) if x - group_x <= TOL => {
                if y > points[*last].1 {
                    *last = i;
                }
            }
            _ => {
                group_x = x;
                out.push(i);
            }
        }
    }
    out
}

/// True when `mid` lies on or below the segment from `a` to `c` (within TOL).
fn on_or_below_chord(a: (f64, f64), mid: (f64, f64), c: (f64, f64)) -> bool {
    let span = c.0 - a.0;
    if span <= 0.0 {
        return true;
    }
    let chord = a.1 + (c.1 - a.1) * (mid.0 - a.0) / span;
    mid.1 <= chord + TOL
}

/// Build a canonical EPF from arbitrary points.
pub fn make_epf<I, P>(points: I) -> Result<Epf, PlcError>
where
    I: IntoIterator<Item = P>,
    P: Into<Knot>,
{
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .map(|p| {
            let k = p.into();
            (k.x, k.y)
        })
        .collect();
    if pts.is_empty() {
        return Err(PlcError::EmptyEpf);
    }
    let (knots, _) = canonicalize_indexed(&pts);
    Ok(Epf { knots })
}

impl Epf {
    /// Degenerate EPF of a leaf: leader payoff `y` at follower payoff `x` only.
    pub fn point(x: f64, y: f64) -> Self {
        Epf {
            knots: vec![Knot { x, y }],
        }
    }

    /// Wrap knots that are already canonical. Checked in debug builds.
    pub fn from_canonical(knots: Vec<Knot>) -> Self {
        let f = Epf { knots };
        debug_assert!(f.is_valid(), "non-canonical knots {:?}", f.knots);
        f
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.knots[0].x
    }

    pub fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1].x
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo(), self.hi())
    }

    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.lo() - TOL && mu <= self.hi() + TOL
    }

    /// Strictly increasing x and non-increasing slopes, within tolerance.
    pub fn is_valid(&self) -> bool {
        if self.knots.is_empty() || self.knots.iter().any(|k| !k.x.is_finite() || !k.y.is_finite())
        {
            return false;
        }
        let increasing = self.knots.windows(2).all(|w| w[1].x - w[0].x > TOL);
        let concave = self.knots.windows(3).all(|w| {
            let s0 = (w[1].y - w[0].y) / (w[1].x - w[0].x);
            let s1 = (w[2].y - w[1].y) / (w[2].x - w[1].x);
            s1 <= s0 + TOL.max(1e-12 * s0.abs())
        });
        increasing && concave
    }

    /// Value at `mu2`; `-inf` outside the domain.
    pub fn eval(&self, mu2: f64) -> f64 {
        let (lo, hi) = self.domain();
        if mu2 < lo - TOL || mu2 > hi + TOL {
            return f64::NEG_INFINITY;
        }
        let mu = mu2.clamp(lo, hi);
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].y;
        }
        // first knot with x >= mu
        let i = k.partition_point(|p| p.x < mu);
        if i == 0 {
            return k[0].y;
        }
        if i == k.len() {
            return k[k.len() - 1].y;
        }
        let (a, b) = (k[i - 1], k[i]);
        a.y + (b.y - a.y) * (mu - a.x) / (b.x - a.x)
    }

    /// Slope of the segment containing `mu`, taking the left segment at knots.
    /// Zero for single-knot functions.
    pub fn slope_at(&self, mu: f64) -> f64 {
        let k = &self.knots;
        if k.len() < 2 {
            return 0.0;
        }
        let i = k.partition_point(|p| p.x < mu).clamp(1, k.len() - 1);
        (k[i].y - k[i - 1].y) / (k[i].x - k[i - 1].x)
    }

    /// Smallest maximiser and the maximum value.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = self.knots[0];
        for k in &self.knots[1..] {
            if k.y > best.y {
                best = *k;
            }
        }
        (best.x, best.y)
    }

    pub fn max_value(&self) -> f64 {
        self.argmax().1
    }

    /// Restrict the domain to `[lo, hi]`, inserting interpolated endpoints.
    /// Returns `None` when the intersection is empty.
    pub fn restrict(&self, lo: f64, hi: f64) -> Option<Epf> {
        let left = truncate(self, lo)?;
        let flipped = left.mirrored();
        let right = truncate(&flipped, -hi)?;
        Some(right.mirrored())
    }

    /// `x -> -x` reflection; keeps concavity.
    fn mirrored(&self) -> Epf {
        Epf {
            knots: self.knots.iter().rev().map(|k| Knot::new(-k.x, k.y)).collect(),
        }
    }

    /// Shift every knot by `(dx, dy)`.
    pub fn shifted(&self, dx: f64, dy: f64) -> Epf {
        Epf {
            knots: self.knots.iter().map(|k| Knot::new(k.x + dx, k.y + dy)).collect(),
        }
    }

    /// Knot list as `x,y` lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in &self.knots {
            let _ = writeln!(s, "{},{}", k.x, k.y);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Epf, PlcError> {
        let mut pts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |v: Option<&str>| -> Result<f64, PlcError> {
                v.map(str::trim)
                    .ok_or_else(|| PlcError::Parse {
                        line: n + 1,
                        reason: "expected two comma-separated values".into(),
                    })?
                    .parse::<f64>()
                    .map_err(|e| PlcError::Parse {
                        line: n + 1,
                        reason: e.to_string(),
                    })
            };
            let mut it = line.split(',');
            let x = parse(it.next())?;
            let y = parse(it.next())?;
            if it.next().is_some() {
                return Err(PlcError::Parse {
                    line: n + 1,
                    reason: "too many fields".into(),
                });
            }
            pts.push((x, y));
        }
        make_epf(pts).map_err(|_| PlcError::Parse {
            line: 0,
            reason: "no knots".into(),
        })
    }
}

/// Upper concave envelope of the pointwise maximum (monotone chain, `O(k log k)`).
pub fn envelope<'a, I>(fs: I) -> Result<Epf, PlcError>
where
    I: IntoIterator<Item = &'a Epf>,
{
    let pts: Vec<(f64, f64)> = fs
        .into_iter()
        .flat_map(|f| f.knots.iter().map(|k| (k.x, k.y)))
        .collect();
    make_epf(pts)
}

/// Same result as [`envelope`] via the all-pairs dominance test (`O(k^3)`).
///
/// A point survives iff no chord between two other points spans its x and
/// passes on or above it. This is the batch-friendly formulation; it is kept
/// as a cross-check of the monotone chain.
pub fn envelope_cubic<'a, I>(fs: I) -> Result<Epf, PlcError>
where
    I: IntoIterator<Item = &'a Epf>,
{
    let raw: Vec<(f64, f64)> = fs
        .into_iter()
        .flat_map(|f| f.knots.iter().map(|k| (k.x, k.y)))
        .collect();
    if raw.is_empty() {
        return Err(PlcError::EmptyEpf);
    }
    let ids = sorted_dedup(&raw);
    let pts: Vec<(f64, f64)> = ids.iter().map(|&i| raw[i]).collect();
    let n = pts.len();
    let mut keep = Vec::with_capacity(n);
    for p in 0..n {
        let mut dominated = false;
        'outer: for a in 0..p {
            for b in p + 1..n {
                if on_or_below_chord(pts[a], pts[p], pts[b]) {
                    dominated = true;
                    break 'outer;
                }
            }
        }
        if !dominated {
            keep.push(Knot::from(pts[p]));
        }
    }
    Ok(Epf { knots: keep })
}

/// Left truncation: the restriction of `f` to `x >= t`. `None` is the all
/// `-inf` function (threshold beyond the domain).
pub fn truncate(f: &Epf, t: f64) -> Option<Epf> {
    let (lo, hi) = f.domain();
    if t <= lo + TOL {
        return Some(f.clone());
    }
    if t > hi + TOL {
        return None;
    }
    if t >= hi - TOL {
        return Some(Epf::point(hi, f.knots[f.knots.len() - 1].y));
    }
    let first_kept = f.knots.partition_point(|k| k.x <= t + TOL);
    let mut knots = Vec::with_capacity(f.knots.len() - first_kept + 1);
    let prev = f.knots[first_kept - 1];
    if (prev.x - t).abs() <= TOL {
        knots.push(prev);
    } else {
        knots.push(Knot::new(t, f.eval(t)));
    }
    knots.extend_from_slice(&f.knots[first_kept..]);
    Some(Epf { knots })
}

fn check_distribution(weighted: &[(f64, Epf)]) -> Result<(), PlcError> {
    let sum: f64 = weighted.iter().map(|(p, _)| *p).sum();
    if weighted.is_empty() || weighted.iter().any(|(p, _)| !(*p > 0.0)) || (sum - 1.0).abs() > 1e-9
    {
        return Err(PlcError::BadDistribution(sum));
    }
    Ok(())
}

struct Segment {
    slope: f64,
    dx: f64,
    dy: f64,
    owner: usize,
}

/// Scaled children and their segments sorted by descending slope.
fn convolution_parts(weighted: &[(f64, Epf)]) -> (Vec<Epf>, Vec<Segment>) {
    let scaled: Vec<Epf> = weighted
        .iter()
        .map(|(p, f)| Epf {
            knots: f.knots.iter().map(|k| Knot::new(p * k.x, p * k.y)).collect(),
        })
        .collect();
    let mut segs = Vec::new();
    for (owner, f) in scaled.iter().enumerate() {
        for w in f.knots.windows(2) {
            let dx = w[1].x - w[0].x;
            let dy = w[1].y - w[0].y;
            segs.push(Segment {
                slope: dy / dx,
                dx,
                dy,
                owner,
            });
        }
    }
    segs.sort_by(|a, b| b.slope.total_cmp(&a.slope).then(a.owner.cmp(&b.owner)));
    (scaled, segs)
}

/// Maximal convolution of probability-scaled EPFs (the chance-node backup).
///
/// Each child `f_i` becomes `p_i f_i(x / p_i)`; the scaled pieces are merged
/// by descending slope starting from the sum of their left endpoints.
pub fn max_convolve(weighted: &[(f64, Epf)]) -> Result<Epf, PlcError> {
    check_distribution(weighted)?;
    let (scaled, segs) = convolution_parts(weighted);
    let mut x: f64 = scaled.iter().map(|f| f.knots[0].x).sum();
    let mut y: f64 = scaled.iter().map(|f| f.knots[0].y).sum();
    let mut pts = Vec::with_capacity(segs.len() + 1);
    pts.push((x, y));
    for s in &segs {
        x += s.dx;
        y += s.dy;
        pts.push((x, y));
    }
    make_epf(pts)
}

/// Per-child follower payoffs (in each child's own units) whose
/// probability-weighted combination attains `max_convolve(weighted)` at `mu2`.
pub fn split_convolution(weighted: &[(f64, Epf)], mu2: f64) -> Result<Vec<f64>, PlcError> {
    check_distribution(weighted)?;
    let (scaled, segs) = convolution_parts(weighted);
    let start: f64 = scaled.iter().map(|f| f.knots[0].x).sum();
    let end: f64 = start + segs.iter().map(|s| s.dx).sum::<f64>();
    if mu2 < start - TOL || mu2 > end + TOL {
        return Err(PlcError::OutOfDomain {
            mu: mu2,
            lo: start,
            hi: end,
        });
    }
    let mut pos: Vec<f64> = scaled.iter().map(|f| f.knots[0].x).collect();
    let mut remaining = (mu2 - start).max(0.0);
    for s in &segs {
        if remaining <= 0.0 {
            break;
        }
        let step = s.dx.min(remaining);
        pos[s.owner] += step;
        remaining -= step;
    }
    Ok(pos
        .iter()
        .zip(weighted)
        .zip(&scaled)
        .map(|((x, (p, f)), sf)| {
            // snap back into the child's domain against rounding
            let (slo, shi) = sf.domain();
            (x.clamp(slo, shi) / p).clamp(f.lo(), f.hi())
        })
        .collect())
}

/// Express `env(mu2)` as a mixture of at most two source points.
///
/// Preference order: a single source attaining the value at `mu2` itself
/// (`t = 1`, lowest index first), otherwise the two envelope knots bracketing
/// `mu2`, each attributed to the lowest-index source attaining it.
pub fn decompose(fs: &[Epf], env: &Epf, mu2: f64) -> Result<Decomposition, PlcError> {
    let (lo, hi) = env.domain();
    if !env.contains(mu2) {
        return Err(PlcError::OutOfDomain { mu: mu2, lo, hi });
    }
    let mu = mu2.clamp(lo, hi);
    let target = env.eval(mu);
    let attains = |f: &Epf, x: f64, v: f64| f.eval(x) >= v - 1e-9 * (1.0 + v.abs());
    if let Some(i) = fs.iter().position(|f| attains(f, mu, target)) {
        return Ok(Decomposition {
            left_index: i,
            right_index: i,
            t: 1.0,
            mu_left: mu,
            mu_right: mu,
        });
    }
    let k = env.knots();
    let j = k.partition_point(|p| p.x < mu).clamp(1, k.len() - 1);
    let (a, b) = (k[j - 1], k[j]);
    let owner = |p: Knot| -> usize {
        fs.iter()
            .position(|f| attains(f, p.x, p.y))
            .unwrap_or_else(|| {
                // rounding noise: take the closest source
                let mut best = 0;
                let mut gap = f64::INFINITY;
                for (i, f) in fs.iter().enumerate() {
                    let g = (p.y - f.eval(p.x)).abs();
                    if g < gap {
                        gap = g;
                        best = i;
                    }
                }
                best
            })
    };
    let t = ((b.x - mu) / (b.x - a.x)).clamp(0.0, 1.0);
    Ok(Decomposition {
        left_index: owner(a),
        right_index: owner(b),
        t,
        mu_left: a.x,
        mu_right: b.x,
    })
}

/// Replace the increasing prefix by a flat segment at the maximum.
pub fn decreasing_part(f: &Epf) -> Epf {
    let (j, _) = argmax_index(f);
    if j == 0 {
        return f.clone();
    }
    let mut knots = Vec::with_capacity(f.knots.len() - j + 1);
    knots.push(Knot::new(f.knots[0].x, f.knots[j].y));
    knots.extend_from_slice(&f.knots[j..]);
    Epf { knots }
}

pub(crate) fn argmax_index(f: &Epf) -> (usize, f64) {
    let mut j = 0;
    for (i, k) in f.knots.iter().enumerate() {
        if k.y > f.knots[j].y {
            j = i;
        }
    }
    (j, f.knots[j].y)
}

fn check_domains(f: &Epf, g: &Epf) -> Result<(), PlcError> {
    if (f.lo() - g.lo()).abs() > TOL || (f.hi() - g.hi()).abs() > TOL {
        return Err(PlcError::DomainMismatch(f.lo(), f.hi(), g.lo(), g.hi()));
    }
    Ok(())
}

/// Sorted union of both knot x-coordinates, merged within TOL and clamped to
/// the common domain.
pub(crate) fn union_xs(f: &Epf, g: &Epf) -> Vec<f64> {
    let lo = f.lo().max(g.lo());
    let hi = f.hi().min(g.hi());
    let mut xs: Vec<f64> = f
        .knots
        .iter()
        .chain(g.knots.iter())
        .map(|k| k.x.clamp(lo, hi))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| (*b - *a).abs() <= TOL);
    xs
}

/// `max |f - g|` over the shared domain.
pub fn linf_distance(f: &Epf, g: &Epf) -> Result<f64, PlcError> {
    check_domains(f, g)?;
    Ok(union_xs(f, g)
        .into_iter()
        .map(|x| (f.eval(x) - g.eval(x)).abs())
        .fold(0.0, f64::max))
}

/// Sum of squared differences at the union of knot x-coordinates.
pub fn knot_sq_loss(f: &Epf, g: &Epf) -> Result<f64, PlcError> {
    check_domains(f, g)?;
    Ok(union_xs(f, g)
        .into_iter()
        .map(|x| (f.eval(x) - g.eval(x)).powi(2))
        .sum())
}
