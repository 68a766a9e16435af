//! Training loop: trajectory sampling into a prioritized replay buffer,
//! knot-squared regression towards frozen lookahead targets, periodic target
//! synchronisation.

use super::bounds::BoundsProvider;
use super::lookahead::{lookahead_target, measure_epsilon, ModelPredictor};
use super::loss::{loss_grad, LossKind};
use super::model::{EpfModel, ModelShape};
use super::optim::AmsGrad;
use super::replay::ReplayBuffer;
use super::FaError;
use crate::game::{enumerate, Game, Owner};
use crate::rng::{stream, streams, Rng};
use crate::solver::DEFAULT_STATE_BUDGET;
use rand::seq::IndexedRandom;
use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA: &str = "sefce-config/1";

/// Which states enter the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// Every non-leaf state of a uniformly random root-to-leaf walk.
    #[default]
    UniformTrajectory,
    /// Uniform draws from the enumerated state set (small games only).
    UniformState,
    /// Trajectory states at depth at least `start - epoch / interval`.
    Layered { start: usize, interval: u64 },
}

/// Follower value bounds fed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BoundsMode {
    /// Enumerated grim and altruistic values.
    #[default]
    Exact,
    /// Closed-form values supplied by the game.
    Analytic,
    /// Resource-collection heuristics with exact search to the given depth.
    Approximate { exact_depth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema: String,
    pub width: usize,
    pub depth: usize,
    pub knots: usize,
    pub batch: usize,
    pub buffer: usize,
    pub lr: f64,
    pub sync_period: u64,
    pub alpha: f64,
    pub traj_every: u64,
    pub epochs: u64,
    pub seed: u64,
    pub loss: LossKind,
    pub sampling: Sampling,
    pub bounds: BoundsMode,
    /// Rows are written every `log_every` epochs (and after the last one).
    pub log_every: u64,
    /// Epsilon is measured on this many sampled states when logging; 0 turns
    /// it off.
    pub audit_states: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schema: CONFIG_SCHEMA.into(),
            width: 128,
            depth: 8,
            knots: 8,
            batch: 128,
            buffer: 1_000_000,
            lr: 1e-5,
            sync_period: 2000,
            alpha: 0.5,
            traj_every: 10,
            epochs: 0,
            seed: 0,
            loss: LossKind::KnotSq,
            sampling: Sampling::UniformTrajectory,
            bounds: BoundsMode::Exact,
            log_every: 100,
            audit_states: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FaError> {
        let bad = |m: &str| Err(FaError::Config(m.into()));
        if self.schema != CONFIG_SCHEMA {
            return Err(FaError::Config(format!("unknown schema {:?}", self.schema)));
        }
        if self.knots < 2 {
            return bad("knots must be at least 2");
        }
        if self.batch == 0 || self.buffer == 0 {
            return bad("batch and buffer must be positive");
        }
        if self.width == 0 && self.depth > 0 {
            return bad("width must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.sync_period == 0 || self.traj_every == 0 || self.log_every == 0 {
            return bad("periods must be positive");
        }
        if let Sampling::Layered { interval: 0, .. } = self.sampling {
            return bad("layered interval must be positive");
        }
        Ok(())
    }

    pub fn shape(&self, input: usize) -> ModelShape {
        ModelShape {
            input,
            width: self.width,
            depth: self.depth,
            knots: self.knots,
        }
    }
}

/// Root-to-leaf walk from a (possibly freshly drawn) root: decision states
/// pick a child uniformly, chance states follow their distribution.
pub fn sample_trajectory<G: Game>(g: &G, rng: &mut Rng) -> Vec<G::State> {
    let mut s = g.sample_root(rng as &mut dyn RngCore);
    let mut out = vec![s.clone()];
    loop {
        let cs = g.children(&s);
        if cs.is_empty() {
            break;
        }
        let i = if g.owner(&s) == Owner::Chance {
            let probs = g.chance_probs(&s);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..cs.len())
        };
        s = cs[i].clone();
        out.push(s.clone());
    }
    out
}

/// Loss of one state and its gradient, accumulated into `grad`.
pub fn accumulate_state<G, B>(
    model: &EpfModel,
    g: &G,
    b: &B,
    s: &G::State,
    kind: LossKind,
    grad: Option<&mut [f64]>,
) -> Result<f64, FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
{
    let (lo, hi) = b.bounds(g, s);
    let pred = model.predict_full(&g.features(s), lo, hi, false)?;
    let target = lookahead_target(model, g, b, s)?;
    let lg = loss_grad(kind, &pred.dec, &target);
    if let Some(grad) = grad {
        let m = model.shape.knots;
        let mut dx = vec![0.0; m];
        let mut dy = vec![0.0; m];
        for (k, p) in pred.dec.iter().enumerate() {
            if let Some(i) = p.x_src {
                dx[i] += lg.dx[k];
            }
            dy[p.y_src] += lg.dy[k];
        }
        model.backward(&pred.forward, &dx, &dy, grad);
    }
    Ok(lg.loss)
}

/// Knot-squared losses of a batch against its lookahead targets: total and
/// per state.
pub fn compute_loss<G, B>(
    model: &EpfModel,
    g: &G,
    b: &B,
    batch: &[G::State],
    kind: LossKind,
) -> Result<(f64, Vec<f64>), FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
{
    if batch.is_empty() {
        return Err(FaError::Config("empty batch".into()));
    }
    let per: Vec<f64> = batch
        .par_iter()
        .map(|s| accumulate_state(model, g, b, s, kind, None))
        .collect::<Result<_, _>>()?;
    Ok((per.iter().sum(), per))
}

/// Loss and summed gradient over a batch. Work is split into fixed chunks
/// whose partial sums are added in order, so results do not depend on the
/// thread count.
pub fn batch_gradient<G, B>(
    model: &EpfModel,
    g: &G,
    b: &B,
    batch: &[G::State],
    kind: LossKind,
) -> Result<(Vec<f64>, Vec<f64>), FaError>
where
    G: Game,
    B: BoundsProvider<G> + ?Sized,
{
    const CHUNKS: usize = 8;
    let n = model.online.len();
    let size = batch.len().div_ceil(CHUNKS).max(1);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = batch
        .par_chunks(size)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let losses = chunk
                .iter()
                .map(|s| accumulate_state(model, g, b, s, kind, Some(&mut grad)))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok((grad, losses))
        })
        .collect::<Result<_, FaError>>()?;
    let mut grad = vec![0.0; n];
    let mut losses = Vec::with_capacity(batch.len());
    for (g_part, l_part) in parts {
        grad.iter_mut().zip(&g_part).for_each(|(a, b)| *a += b);
        losses.extend(l_part);
    }
    Ok((grad, losses))
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub total_loss: f64,
    pub mean_loss: f64,
    pub eps_audit: Option<f64>,
    pub notes: String,
}

pub struct Trainer<'a, G: Game, B: BoundsProvider<G> + ?Sized> {
    pub g: &'a G,
    pub bounds: &'a B,
    pub cfg: TrainConfig,
    pub model: EpfModel,
    pub opt: AmsGrad,
    pub replay: ReplayBuffer<G::State>,
    pub epoch: u64,
    replay_rng: Rng,
    traj_rng: Rng,
    audit_rng: Rng,
    all_states: Option<Vec<G::State>>,
}

impl<'a, G: Game, B: BoundsProvider<G> + ?Sized> Trainer<'a, G, B> {
    pub fn new(g: &'a G, bounds: &'a B, cfg: TrainConfig) -> Result<Self, FaError> {
        cfg.validate()?;
        let model = EpfModel::new(cfg.shape(g.feature_dim()), &mut stream(cfg.seed, streams::INIT))?;
        Self::resume(g, bounds, cfg, model, None, 0)
    }

    /// Continue from saved parameters and optimizer state. The replay
    /// buffer starts empty.
    pub fn resume(
        g: &'a G,
        bounds: &'a B,
        cfg: TrainConfig,
        model: EpfModel,
        opt: Option<AmsGrad>,
        epoch: u64,
    ) -> Result<Self, FaError> {
        cfg.validate()?;
        if model.shape != cfg.shape(g.feature_dim()) {
            return Err(FaError::Shape(format!(
                "model shape {:?} does not match the configuration",
                model.shape
            )));
        }
        let n = model.online.len();
        let opt = opt.unwrap_or_else(|| AmsGrad::new(n, cfg.lr));
        if opt.m.len() != n {
            return Err(FaError::Shape("optimizer state size mismatch".into()));
        }
        let seed = cfg.seed ^ epoch.rotate_left(32);
        Ok(Trainer {
            g,
            bounds,
            replay: ReplayBuffer::new(cfg.buffer, cfg.alpha),
            replay_rng: stream(seed, streams::REPLAY),
            traj_rng: stream(seed, streams::TRAJECTORY),
            audit_rng: stream(seed, streams::AUDIT),
            cfg,
            model,
            opt,
            epoch,
            all_states: None,
        })
    }

    /// Smallest depth admitted to the buffer at the current epoch.
    pub fn min_depth(&self) -> usize {
        match self.cfg.sampling {
            Sampling::Layered { start, interval } => {
                start.saturating_sub(usize::try_from(self.epoch / interval).unwrap_or(usize::MAX))
            }
            _ => 0,
        }
    }

    fn admits(&self, s: &G::State) -> bool {
        self.g.owner(s) != Owner::Leaf && self.g.depth(s) >= self.min_depth()
    }

    /// Candidate states for one buffer refresh.
    fn draw_states(&mut self) -> Result<Vec<G::State>, FaError> {
        if self.cfg.sampling == Sampling::UniformState {
            if self.all_states.is_none() {
                let root = self.g.root();
                let e = enumerate(self.g, &root, DEFAULT_STATE_BUDGET)?;
                let states: Vec<G::State> =
                    e.order.into_iter().filter(|s| self.g.owner(s) != Owner::Leaf).collect();
                if states.is_empty() {
                    return Err(FaError::Config("game has no decision states".into()));
                }
                self.all_states = Some(states);
            }
            let all = self.all_states.as_ref().expect("filled above");
            let k = self.g.max_depth().max(1);
            return Ok((0..k)
                .map(|_| all.choose(&mut self.traj_rng).expect("non-empty").clone())
                .collect());
        }
        Ok(sample_trajectory(self.g, &mut self.traj_rng))
    }

    /// Push one trajectory's admissible states; returns how many entered.
    pub fn add_trajectory(&mut self) -> Result<usize, FaError> {
        let states = self.draw_states()?;
        let mut added = 0;
        for s in states {
            if self.admits(&s) {
                self.replay.push(s);
                added += 1;
            }
        }
        Ok(added)
    }

    /// Put exactly these states in the buffer (for targeted runs and tests).
    pub fn seed_buffer(&mut self, states: impl IntoIterator<Item = G::State>) {
        for s in states {
            self.replay.push(s);
        }
    }

    /// One epoch: maybe refresh the buffer, take one optimizer step on a
    /// prioritized batch, refresh priorities and sync the target on
    /// schedule. Returns the batch losses.
    pub fn step(&mut self) -> Result<Vec<f64>, FaError> {
        if self.epoch % self.cfg.traj_every == 0 || self.replay.is_empty() {
            let mut tries = 0;
            while self.add_trajectory()? == 0 && self.replay.is_empty() {
                tries += 1;
                if tries >= 1000 {
                    return Err(FaError::Config("no state passes the sampling filter".into()));
                }
            }
        }
        let idx = self.replay.sample(&mut self.replay_rng, self.cfg.batch);
        let batch: Vec<G::State> = idx.iter().map(|&i| self.replay.get(i).clone()).collect();
        let (grad, losses) = batch_gradient(&self.model, self.g, self.bounds, &batch, self.cfg.loss)?;
        self.opt.apply(&mut self.model.online, &grad);
        for (&i, &l) in idx.iter().zip(&losses) {
            self.replay.update(i, l);
        }
        self.epoch += 1;
        if self.epoch % self.cfg.sync_period == 0 {
            self.model.sync_target();
        }
        Ok(losses)
    }

    /// Largest lookahead residual of the online model over `states`.
    pub fn epsilon(&self, states: &[G::State]) -> Result<f64, FaError> {
        let p = ModelPredictor {
            model: &self.model,
            use_target: false,
        };
        measure_epsilon(&p, self.g, self.bounds, states)
    }

    fn audit_sample(&mut self) -> Vec<G::State> {
        let mut out = Vec::new();
        while out.len() < self.cfg.audit_states {
            let t = sample_trajectory(self.g, &mut self.audit_rng);
            out.extend(t.into_iter().filter(|s| self.g.owner(s) != Owner::Leaf));
        }
        out.truncate(self.cfg.audit_states);
        out
    }

    /// Train for `epochs` more epochs, handing a metrics row to `log` every
    /// `log_every` epochs and after the last one.
    pub fn run(&mut self, epochs: u64, mut log: impl FnMut(&MetricsRow)) -> Result<(), FaError> {
        let end = self.epoch + epochs;
        while self.epoch < end {
            let losses = self.step()?;
            if self.epoch % self.cfg.log_every == 0 || self.epoch == end {
                let total: f64 = losses.iter().sum();
                let eps_audit = if self.cfg.audit_states > 0 {
                    let states = self.audit_sample();
                    Some(self.epsilon(&states)?)
                } else {
                    None
                };
                log(&MetricsRow {
                    epoch: self.epoch,
                    total_loss: total,
                    mean_loss: total / losses.len() as f64,
                    eps_audit,
                    notes: format!("buffer={}", self.replay.len()),
                });
            }
        }
        Ok(())
    }
}
