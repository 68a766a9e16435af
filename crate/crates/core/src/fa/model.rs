//! Feedforward EPF predictor with a bounded m-knot head.
//!
//! Parameters live in one flat vector so the optimizer, target copy and
//! checkpoint code can treat them uniformly. Layout: for each hidden layer
//! `W (width x fan_in)` then `b (width)`; then the head `Zx ((m-2) x h)`,
//! `bx (m-2)`, `Zy (m x h)`, `by (m)`.

use super::FaError;
use crate::plc::{canonicalize_indexed, Epf, Knot};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    pub width: usize,
    pub depth: usize,
    pub knots: usize,
}

impl ModelShape {
    /// `(fan_in, fan_out)` of every affine map, head last (x part, y part).
    fn layers(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.depth + 2);
        let mut fan_in = self.input;
        for _ in 0..self.depth {
            v.push((fan_in, self.width));
            fan_in = self.width;
        }
        v.push((fan_in, self.knots - 2));
        v.push((fan_in, self.knots));
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpfModel {
    pub shape: ModelShape,
    pub online: Vec<f64>,
    pub target: Vec<f64>,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input to each hidden layer, then the head input.
    acts: Vec<Vec<f64>>,
    /// Logits of the interior x positions.
    pub x_logits: Vec<f64>,
    /// Raw head points `(x, y)`, endpoints included.
    pub points: Vec<(f64, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// Knot of a predicted EPF with the head outputs it came from. `x_src` is
/// `None` when the coordinate is a fixed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProvKnot {
    pub x: f64,
    pub y: f64,
    pub x_src: Option<usize>,
    pub y_src: usize,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub forward: Forward,
    /// Canonical prediction.
    pub epf: Epf,
    /// Decreasing part of the prediction with provenance.
    pub dec: Vec<ProvKnot>,
}

impl Prediction {
    pub fn dec_epf(&self) -> Epf {
        Epf::from_canonical(self.dec.iter().map(|k| Knot::new(k.x, k.y)).collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl EpfModel {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation for every
    /// weight and hidden bias; the target starts as a copy.
    ///
    /// Head biases start from a decreasing staircase: interior x logits sit
    /// at evenly spaced quantiles in knot order and the y biases fall by one
    /// unit across the knots.
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self, FaError> {
        if shape.knots < 2 {
            return Err(FaError::Config(format!("need at least 2 knots, got {}", shape.knots)));
        }
        if shape.input == 0 || (shape.depth > 0 && shape.width == 0) {
            return Err(FaError::Config("input and hidden widths must be positive".into()));
        }
        let mut online = Vec::with_capacity(shape.param_count());
        let layers = shape.layers();
        for &(fan_in, fan_out) in &layers {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                online.push(rng.random_range(-bound..bound));
            }
        }
        let m = shape.knots;
        let (hin, mx) = layers[shape.depth];
        let x_bias = online.len() - (hin * m + m) - mx;
        for i in 0..mx {
            let q = (i + 1) as f64 / (m - 1) as f64;
            online[x_bias + i] = (q / (1.0 - q)).ln();
        }
        let y_bias = online.len() - m;
        for k in 0..m {
            online[y_bias + k] = -(k as f64) / (m - 1) as f64;
        }
        Ok(EpfModel {
            shape,
            target: online.clone(),
            online,
        })
    }

    pub fn from_params(shape: ModelShape, online: Vec<f64>, target: Vec<f64>) -> Result<Self, FaError> {
        let n = shape.param_count();
        if online.len() != n || target.len() != n {
            return Err(FaError::Shape(format!(
                "expected {n} parameters, got {} and {}",
                online.len(),
                target.len()
            )));
        }
        Ok(EpfModel {
            shape,
            online,
            target,
        })
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from_slice(&self.online);
    }

    pub fn params(&self, use_target: bool) -> &[f64] {
        if use_target {
            &self.target
        } else {
            &self.online
        }
    }

    /// Forward pass with explicit parameters.
    pub fn forward_with(
        &self,
        params: &[f64],
        features: &[f64],
        lo: f64,
        hi: f64,
    ) -> Result<Forward, FaError> {
        let shape = &self.shape;
        if features.len() != shape.input {
            return Err(FaError::Shape(format!(
                "feature width {} but model expects {}",
                features.len(),
                shape.input
            )));
        }
        if !(lo <= hi) {
            return Err(FaError::Shape(format!("bounds out of order: [{lo}, {hi}]")));
        }
        let layers = shape.layers();
        let mut acts = Vec::with_capacity(shape.depth + 1);
        let mut h = features.to_vec();
        let mut off = 0;
        for &(fan_in, fan_out) in &layers[..shape.depth] {
            let w = &params[off..off + fan_in * fan_out];
            let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let next: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z: f64 = row.iter().zip(&h).map(|(a, x)| a * x).sum::<f64>() + b[o];
                    z.max(0.0)
                })
                .collect();
            acts.push(std::mem::replace(&mut h, next));
        }
        let affine = |off: usize, fan_in: usize, fan_out: usize, h: &[f64]| -> Vec<f64> {
            let w = &params[off..off + fan_in * fan_out];
            let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            (0..fan_out)
                .map(|o| w[o * fan_in..(o + 1) * fan_in].iter().zip(h).map(|(a, x)| a * x).sum::<f64>() + b[o])
                .collect()
        };
        let (hin, mx) = layers[shape.depth];
        let x_logits = affine(off, hin, mx, &h);
        off += hin * mx + mx;
        let ys = affine(off, hin, shape.knots, &h);
        acts.push(h);
        let m = shape.knots;
        let mut points = Vec::with_capacity(m);
        for k in 0..m {
            let x = if k == 0 {
                lo
            } else if k == m - 1 {
                hi
            } else {
                sigmoid(x_logits[k - 1]) * (hi - lo) + lo
            };
            points.push((x, ys[k]));
        }
        Ok(Forward {
            acts,
            x_logits,
            points,
            lo,
            hi,
        })
    }

    /// Predicted EPF plus the intermediates needed for gradients.
    pub fn predict_full(
        &self,
        features: &[f64],
        lo: f64,
        hi: f64,
        use_target: bool,
    ) -> Result<Prediction, FaError> {
        let forward = self.forward_with(self.params(use_target), features, lo, hi)?;
        let (knots, src) = canonicalize_indexed(&forward.points);
        let m = self.shape.knots;
        let fixed = |i: usize| if i == 0 || i == m - 1 { None } else { Some(i) };
        let mut j = 0;
        for (i, k) in knots.iter().enumerate() {
            if k.y > knots[j].y {
                j = i;
            }
        }
        let mut dec = Vec::with_capacity(knots.len() - j + 1);
        if j > 0 {
            dec.push(ProvKnot {
                x: knots[0].x,
                y: knots[j].y,
                x_src: fixed(src[0]),
                y_src: src[j],
            });
        }
        for i in j..knots.len() {
            dec.push(ProvKnot {
                x: knots[i].x,
                y: knots[i].y,
                x_src: fixed(src[i]),
                y_src: src[i],
            });
        }
        Ok(Prediction {
            forward,
            epf: Epf::from_canonical(knots),
            dec,
        })
    }

    pub fn predict(&self, features: &[f64], lo: f64, hi: f64, use_target: bool) -> Result<Epf, FaError> {
        Ok(self.predict_full(features, lo, hi, use_target)?.epf)
    }

    /// Accumulate parameter gradients given derivatives with respect to the
    /// head points (`dx` for every point, only interior entries matter).
    pub fn backward(&self, fwd: &Forward, dx: &[f64], dy: &[f64], grad: &mut [f64]) {
        let shape = &self.shape;
        let params = &self.online;
        let m = shape.knots;
        let layers = shape.layers();
        let scale = fwd.hi - fwd.lo;
        let dlogit: Vec<f64> = (1..m - 1)
            .map(|k| {
                let s = sigmoid(fwd.x_logits[k - 1]);
                dx[k] * s * (1.0 - s) * scale
            })
            .collect();
        // offsets of each affine block
        let mut offs = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(i, o) in &layers {
            offs.push(off);
            off += i * o + o;
        }
        let h = &fwd.acts[shape.depth];
        let hin = h.len();
        let mut dh = vec![0.0; hin];
        for (block, dz) in [(shape.depth, dlogit.as_slice()), (shape.depth + 1, dy)] {
            let (fi, fo) = layers[block];
            let o0 = offs[block];
            for o in 0..fo {
                let g = dz[o];
                if g == 0.0 {
                    continue;
                }
                let row = o0 + o * fi;
                for i in 0..fi {
                    grad[row + i] += g * h[i];
                    dh[i] += g * params[row + i];
                }
                grad[o0 + fi * fo + o] += g;
            }
        }
        // hidden layers, last to first; acts[l] is the input to layer l and
        // acts[l + 1] its ReLU output
        for l in (0..shape.depth).rev() {
            let (fi, fo) = layers[l];
            let o0 = offs[l];
            let input = &fwd.acts[l];
            let out = &fwd.acts[l + 1];
            let mut din = vec![0.0; fi];
            for o in 0..fo {
                if out[o] <= 0.0 {
                    continue;
                }
                let g = dh[o];
                if g == 0.0 {
                    continue;
                }
                let row = o0 + o * fi;
                for i in 0..fi {
                    grad[row + i] += g * input[i];
                    din[i] += g * params[row + i];
                }
                grad[o0 + fi * fo + o] += g;
            }
            dh = din;
        }
    }
}
