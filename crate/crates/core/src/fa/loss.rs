//! Losses between a predicted EPF (with knot provenance) and a fixed target,
//! together with their derivatives with respect to the predicted knots.

use super::model::ProvKnot;
use crate::plc::{Epf, TOL};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Sum of squared differences at the union of knot x-coordinates.
    #[default]
    KnotSq,
    /// Integral of the squared difference over the domain.
    IntegralSq,
}

/// Loss value and derivatives with respect to each predicted knot's x and y.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

enum Site {
    /// On predicted knot `k`.
    Knot(usize),
    /// Strictly inside predicted segment `k..k+1` at fraction `lambda`.
    Inside(usize, f64),
}

/// Slope of `g` on the segment ending at `x` (left subgradient), or the first
/// segment at the left end.
fn left_slope(g: &Epf, x: f64) -> f64 {
    let k = g.knots();
    if k.len() < 2 {
        return 0.0;
    }
    let i = k.partition_point(|p| p.x < x - TOL).clamp(1, k.len() - 1);
    (k[i].y - k[i - 1].y) / (k[i].x - k[i - 1].x)
}

/// Union evaluation sites, sorted, with where each one sits on the prediction.
fn sites(pred: &[ProvKnot], target: &Epf) -> Vec<(f64, Site)> {
    let lo = pred[0].x;
    let hi = pred[pred.len() - 1].x;
    let mut out: Vec<(f64, Site)> = pred.iter().enumerate().map(|(k, p)| (p.x, Site::Knot(k))).collect();
    for t in target.knots() {
        let u = t.x;
        if u <= lo + TOL || u >= hi - TOL {
            continue;
        }
        let k = pred.partition_point(|p| p.x <= u) - 1;
        if (pred[k].x - u).abs() <= TOL || (pred[k + 1].x - u).abs() <= TOL {
            continue;
        }
        let lambda = (u - pred[k].x) / (pred[k + 1].x - pred[k].x);
        out.push((u, Site::Inside(k, lambda)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Value of the prediction at a site.
fn pred_value(pred: &[ProvKnot], site: &Site) -> f64 {
    match *site {
        Site::Knot(k) => pred[k].y,
        Site::Inside(k, l) => pred[k].y + l * (pred[k + 1].y - pred[k].y),
    }
}

/// Add `w * d(diff)/d(knots)` at a site to the gradient buffers.
fn push_diff_grad(pred: &[ProvKnot], target: &Epf, u: f64, site: &Site, w: f64, g: &mut LossGrad) {
    match *site {
        Site::Knot(k) => {
            g.dy[k] += w;
            g.dx[k] -= w * left_slope(target, u);
        }
        Site::Inside(k, l) => {
            let s = (pred[k + 1].y - pred[k].y) / (pred[k + 1].x - pred[k].x);
            g.dy[k] += w * (1.0 - l);
            g.dy[k + 1] += w * l;
            g.dx[k] -= w * s * (1.0 - l);
            g.dx[k + 1] -= w * s * l;
        }
    }
}

/// Loss and knot gradients. The target must share the prediction's domain.
pub fn loss_grad(kind: LossKind, pred: &[ProvKnot], target: &Epf) -> LossGrad {
    let n = pred.len();
    let mut g = LossGrad {
        loss: 0.0,
        dx: vec![0.0; n],
        dy: vec![0.0; n],
    };
    let pts = sites(pred, target);
    let diffs: Vec<f64> = pts
        .iter()
        .map(|(u, site)| pred_value(pred, site) - eval_clamped(target, *u))
        .collect();
    match kind {
        LossKind::KnotSq => {
            for ((u, site), d) in pts.iter().zip(&diffs) {
                g.loss += d * d;
                push_diff_grad(pred, target, *u, site, 2.0 * d, &mut g);
            }
        }
        LossKind::IntegralSq => {
            let q = |i: usize| (diffs[i] * diffs[i] + diffs[i] * diffs[i + 1] + diffs[i + 1] * diffs[i + 1]) / 3.0;
            let m = pts.len();
            let mut dd = vec![0.0; m];
            for i in 0..m.saturating_sub(1) {
                let width = pts[i + 1].0 - pts[i].0;
                g.loss += width * q(i);
                dd[i] += width * (2.0 * diffs[i] + diffs[i + 1]) / 3.0;
                dd[i + 1] += width * (diffs[i] + 2.0 * diffs[i + 1]) / 3.0;
            }
            for i in 0..m {
                let (u, site) = &pts[i];
                push_diff_grad(pred, target, *u, site, dd[i], &mut g);
                if let Site::Knot(k) = site {
                    // moving the site itself changes the neighbouring widths
                    let left = if i > 0 { q(i - 1) } else { 0.0 };
                    let right = if i + 1 < m { q(i) } else { 0.0 };
                    g.dx[*k] += left - right;
                }
            }
        }
    }
    g
}

/// Target value with the domain ends snapped, so sites on the shared
/// boundary never evaluate to `-inf` through rounding.
fn eval_clamped(f: &Epf, x: f64) -> f64 {
    f.eval(x.clamp(f.lo(), f.hi()))
}
