//! Files: game specs, result documents, checkpoints, metrics logs and SVG
//! charts of frontiers.

use crate::fa::{EpfModel, MetricsRow, ModelShape};
use crate::fa::optim::AmsGrad;
use crate::game::{
    build_fig1, build_fig6, build_promise_game, build_rc, sample_featurized_q, sample_gp_maps, Enumeration,
    Game, GameError, GameTree, Grid, NodeSpec, Owner, RcGame, TantrumGame, TantrumParams,
};
use crate::plc::{Epf, PlcError};
use crate::solver::{Decision, SolveResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const GAME_SCHEMA: &str = "sefce-game/1";
pub const RESULT_SCHEMA: &str = "sefce-result/1";
pub const CHECKPOINT_MAGIC: &str = "sefce-checkpoint/1";
pub const METRICS_HEADER: &str = "epoch,total_loss,mean_loss,eps_audit,notes";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Plc(#[from] PlcError),
    #[error(transparent)]
    Game(#[from] GameError),
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// What a game spec describes: an explicit tree or a generator with its
/// sampled data embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GameKind {
    Tree {
        nodes: Vec<NodeSpec>,
    },
    Fig1 {
        k1: f64,
        k2: f64,
    },
    Promise {
        k1: f64,
        k2: f64,
        eps: f64,
    },
    Fig6,
    Tantrum {
        n: usize,
        q1: Vec<f64>,
        q2: Vec<f64>,
    },
    /// A family of Tantrum games; `q1`/`q2` are the instance drawn with
    /// `seed`, further instances are drawn during training.
    TantrumFeaturized {
        n: usize,
        shift: f64,
        seed: u64,
        q1: Vec<f64>,
        q2: Vec<f64>,
    },
    Rc {
        j: usize,
        n: usize,
        seed: Option<u64>,
        length_scale: Option<f64>,
        sigma: Option<f64>,
        r1: Grid,
        r2: Grid,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub schema: String,
    #[serde(flatten)]
    pub kind: GameKind,
}

impl GameSpec {
    pub fn new(kind: GameKind) -> Self {
        GameSpec {
            schema: GAME_SCHEMA.into(),
            kind,
        }
    }

    /// Resource collection with log-GP maps drawn from `seed`.
    pub fn rc_gp(j: usize, n: usize, length_scale: f64, sigma: f64, seed: u64) -> Result<Self, GameError> {
        let (r1, r2) = sample_gp_maps(j, length_scale, sigma, seed)?;
        Ok(GameSpec::new(GameKind::Rc {
            j,
            n,
            seed: Some(seed),
            length_scale: Some(length_scale),
            sigma: Some(sigma),
            r1,
            r2,
        }))
    }

    pub fn tantrum_featurized(n: usize, shift: f64, seed: u64) -> Self {
        let (q1, q2) = sample_featurized_q(n, shift, seed);
        GameSpec::new(GameKind::TantrumFeaturized { n, shift, seed, q1, q2 })
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let spec: GameSpec = serde_json::from_str(text)?;
        if spec.schema != GAME_SCHEMA {
            return Err(IoError::Format(format!("unknown game schema {:?}", spec.schema)));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("specs serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_bytes(path, self.to_json().as_bytes())
    }

    pub fn build(&self) -> Result<AnyGame, GameError> {
        Ok(match &self.kind {
            GameKind::Tree { nodes } => AnyGame::Tree(GameTree::new(nodes.clone())?),
            GameKind::Fig1 { k1, k2 } => AnyGame::Tree(build_fig1(*k1, *k2)),
            GameKind::Promise { k1, k2, eps } => AnyGame::Tree(build_promise_game(*k1, *k2, *eps)?),
            GameKind::Fig6 => AnyGame::Tree(build_fig6()),
            GameKind::Tantrum { n, q1, q2 } => {
                AnyGame::Tantrum(TantrumGame::new(TantrumParams::new(*n, q1.clone(), q2.clone())?))
            }
            GameKind::TantrumFeaturized { n, shift, q1, q2, .. } => AnyGame::Tantrum(TantrumGame::featurized(
                TantrumParams::new(*n, q1.clone(), q2.clone())?,
                *shift,
            )?),
            GameKind::Rc { j, n, r1, r2, .. } => AnyGame::Rc(build_rc(*j, *n, r1, r2)?),
        })
    }
}

/// A built game of any supported family.
#[derive(Debug, Clone)]
pub enum AnyGame {
    Tree(GameTree),
    Tantrum(TantrumGame),
    Rc(RcGame),
}

/// One state of a result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: String,
    pub owner: Owner,
    pub lo: f64,
    pub hi: f64,
    pub epf: Vec<(f64, f64)>,
    pub decision: Option<Decision>,
}

/// Serialized output of the exact solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub schema: String,
    /// `(mu2, U)` at the root frontier's maximiser.
    pub opt: (f64, f64),
    pub root_promise: f64,
    pub states: Vec<StateRecord>,
}

/// Result document with states in the enumeration's post-order.
pub fn result_doc<G: Game>(g: &G, e: &Enumeration<G::State>, r: &SolveResult<G::State>) -> ResultDoc {
    let states = e
        .order
        .iter()
        .map(|s| {
            let (lo, hi) = r.bounds.get(s);
            StateRecord {
                id: format!("{s:?}"),
                owner: g.owner(s),
                lo,
                hi,
                epf: r.epfs[s].knots().iter().map(|k| (k.x, k.y)).collect(),
                decision: r.profile.get(s).cloned(),
            }
        })
        .collect();
    ResultDoc {
        schema: RESULT_SCHEMA.into(),
        opt: r.opt,
        root_promise: r.root_promise,
        states,
    }
}

/// Saved training state: both parameter sets, optimizer moments, epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EpfModel,
    pub opt: AmsGrad,
    pub epoch: u64,
}

impl Checkpoint {
    /// Text header (shapes and scalars, ending in `end`) followed by the
    /// sections `online, target, m, v, vmax` as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sh = self.model.shape;
        let n = sh.param_count();
        let mut h = String::new();
        let _ = writeln!(h, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(h, "input {}", sh.input);
        let _ = writeln!(h, "width {}", sh.width);
        let _ = writeln!(h, "depth {}", sh.depth);
        let _ = writeln!(h, "knots {}", sh.knots);
        let mut fan_in = sh.input;
        for l in 0..sh.depth {
            let _ = writeln!(h, "layer hidden{l} W {}x{fan_in} b {}", sh.width, sh.width);
            fan_in = sh.width;
        }
        let _ = writeln!(h, "layer head_x W {}x{fan_in} b {}", sh.knots - 2, sh.knots - 2);
        let _ = writeln!(h, "layer head_y W {}x{fan_in} b {}", sh.knots, sh.knots);
        let _ = writeln!(h, "params {n}");
        let _ = writeln!(h, "epoch {}", self.epoch);
        let _ = writeln!(h, "step {}", self.opt.step);
        let _ = writeln!(h, "lr {}", self.opt.lr);
        let _ = writeln!(h, "beta1 {}", self.opt.beta1);
        let _ = writeln!(h, "beta2 {}", self.opt.beta2);
        let _ = writeln!(h, "eps {}", self.opt.eps);
        let _ = writeln!(h, "sections online target m v vmax");
        let _ = writeln!(h, "end");
        let mut out = h.into_bytes();
        for sec in [&self.model.online, &self.model.target, &self.opt.m, &self.opt.v, &self.opt.vmax] {
            for x in sec.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let bad = |m: String| IoError::Format(m);
        let marker = b"\nend\n";
        let pos = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| bad("checkpoint header not terminated".into()))?;
        let header = std::str::from_utf8(&bytes[..pos]).map_err(|e| bad(e.to_string()))?;
        let body = &bytes[pos + marker.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("not a checkpoint".into()));
        }
        let mut kv = std::collections::HashMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once(' ') {
                kv.insert(k, v);
            }
        }
        fn get<T: std::str::FromStr>(kv: &std::collections::HashMap<&str, &str>, k: &str) -> Result<T, IoError> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| IoError::Format(format!("checkpoint header lacks a valid {k}")))
        }
        let shape = ModelShape {
            input: get(&kv, "input")?,
            width: get(&kv, "width")?,
            depth: get(&kv, "depth")?,
            knots: get(&kv, "knots")?,
        };
        if shape.knots < 2 {
            return Err(bad("checkpoint has fewer than 2 knots".into()));
        }
        let n: usize = get(&kv, "params")?;
        if n != shape.param_count() {
            return Err(bad(format!("{n} parameters do not fit the listed shapes")));
        }
        if body.len() != 5 * n * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", 5 * n * 8, body.len())));
        }
        let mut secs = body.chunks_exact(n * 8).map(|c| {
            c.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>()
        });
        let mut next = || secs.next().unwrap_or_default();
        let (online, target, m, v, vmax) = (next(), next(), next(), next(), next());
        let model = EpfModel::from_params(shape, online, target).map_err(|e| bad(e.to_string()))?;
        let opt = AmsGrad {
            lr: get(&kv, "lr")?,
            beta1: get(&kv, "beta1")?,
            beta2: get(&kv, "beta2")?,
            eps: get(&kv, "eps")?,
            step: get(&kv, "step")?,
            m,
            v,
            vmax,
        };
        Ok(Checkpoint {
            model,
            opt,
            epoch: get(&kv, "epoch")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = std::fs::read(path).map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// One CSV line (no newline) of the metrics log.
pub fn metrics_line(row: &MetricsRow) -> String {
    let eps = row.eps_audit.map(|e| e.to_string()).unwrap_or_default();
    let notes = row.notes.replace([',', '\n'], ";");
    format!("{},{},{},{},{}", row.epoch, row.total_loss, row.mean_loss, eps, notes)
}

/// Parsed metrics log rows (header checked).
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>, IoError> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(IoError::Format("metrics header mismatch".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(IoError::Format(format!("bad metrics row {l:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| IoError::Format(format!("{s:?}: {e}")));
            Ok(MetricsRow {
                epoch: f[0].parse().map_err(|e| IoError::Format(format!("{:?}: {e}", f[0])))?,
                total_loss: num(f[1])?,
                mean_loss: num(f[2])?,
                eps_audit: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                notes: f[4].to_string(),
            })
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// SVG chart of one or more frontiers: follower payoff on the horizontal
/// axis, leader payoff on the vertical one, knots marked. A legend is drawn
/// when there is more than one series.
pub fn render_svg(series: &[(String, Epf)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let pts = series.iter().flat_map(|(_, f)| f.knots().iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for k in pts {
        x0 = x0.min(k.x);
        x1 = x1.max(k.x);
        y0 = y0.min(k.y);
        y1 = y1.max(k.y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{pad}" y1="{}" x2="{}" y2="{}"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}"/></g>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">follower payoff μ₂</text>"#, w / 2.0, h - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">leader payoff U</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, sx(x), h - pad + 16.0, fmt_tick(x));
    }
    for y in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, pad - 6.0, sy(y) + 4.0, fmt_tick(y));
    }
    for (i, (name, f)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = f.knots().iter().map(|k| format!("{:.2},{:.2}", sx(k.x), sy(k.y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            xml_escape(name),
            path.join(" ")
        );
        for k in f.knots() {
            let _ = writeln!(s, r#"<circle class="knot" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, sx(k.x), sy(k.y));
        }
    }
    if series.len() > 1 {
        let _ = writeln!(s, r#"<g class="legend">"#);
        for (i, (name, _)) in series.iter().enumerate() {
            let y = pad + 18.0 * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                w - pad - 120.0,
                w - pad - 100.0,
                w - pad - 94.0,
                y + 4.0,
                xml_escape(name)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
