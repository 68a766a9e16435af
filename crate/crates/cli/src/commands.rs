//! Subcommand implementations.

use crate::error::CliError;
use crate::{EvalArgs, GenArgs, GenKind, PlotArgs, SolveArgs, TrainArgs};
use sefce_core::eval::{
    evaluate_model, evaluate_profile, featurized_instances, held_out, kappa, mean, BaselineReport,
};
use sefce_core::fa::train::BoundsMode;
use sefce_core::fa::{AnalyticBounds, BoundsProvider, RcApproxBounds, TableBounds, TrainConfig, Trainer};
use sefce_core::game::{enumerate, random_tree, Game, TantrumGame};
use sefce_core::io::{
    metrics_line, read_text, render_svg, result_doc, write_bytes, AnyGame, Checkpoint, GameKind, GameSpec,
    ResultDoc, METRICS_HEADER,
};
use sefce_core::rng::{stream, streams};
use sefce_core::solver::{self, child_taus, compute_bounds, solve_from, StrategyProfile};
use sefce_core::verify::{expected_payoffs, greedy_tantrum_profile, nonstrategic_rc_profile};
use sefce_core::Epf;
use serde::Serialize;
use std::collections::HashMap;
use std::path::Path;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(write_bytes(path, s.as_bytes())?)
}

fn stakes(v: &[f64], n: usize, name: &str) -> Result<Vec<f64>, CliError> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v.to_vec()),
        len => Err(CliError::config(format!("--{name} has {len} entries, expected 1 or {n}"))),
    }
}

pub fn gen_game(a: &GenArgs, seed: u64) -> Result<(), CliError> {
    let spec = match a.kind {
        GenKind::Fig1 => GameSpec::new(GameKind::Fig1 { k1: a.k1, k2: a.k2 }),
        GenKind::Promise => GameSpec::new(GameKind::Promise {
            k1: a.k1,
            k2: a.k2,
            eps: a.eps,
        }),
        GenKind::Fig6 => GameSpec::new(GameKind::Fig6),
        GenKind::Tantrum => GameSpec::new(GameKind::Tantrum {
            n: a.n,
            q1: stakes(&a.q1, a.n, "q1")?,
            q2: stakes(&a.q2, a.n, "q2")?,
        }),
        GenKind::TantrumFeaturized => GameSpec::tantrum_featurized(a.n, a.shift, seed),
        GenKind::Rc => GameSpec::rc_gp(a.j, a.n, a.length_scale, a.sigma, seed)?,
        GenKind::RandomTree => {
            let t = random_tree(&mut stream(seed, streams::RANDOM_TREE), a.max_states, a.chance_frac);
            GameSpec::new(GameKind::Tree {
                nodes: t.nodes().to_vec(),
            })
        }
    };
    spec.build()?;
    spec.save(&a.out.join("game.json"))?;
    Ok(())
}

fn load_game(path: &Path) -> Result<AnyGame, CliError> {
    Ok(GameSpec::load(path)?.build()?)
}

fn solve_game<G: Game>(g: &G, a: &SolveArgs) -> Result<(), CliError> {
    let root = g.root();
    let r = solve_from(g, &root, a.budget)?;
    let e = enumerate(g, &root, a.budget)?;
    let doc = result_doc(g, &e, &r);
    write_json(&a.out.join("result.json"), &doc)?;
    write_bytes(&a.out.join("opt.csv"), format!("{},{}\n", r.opt.0, r.opt.1).as_bytes())?;
    if a.epf_csv {
        let dir = a.out.join("epf");
        let mut index = String::from("index,state\n");
        for (i, s) in e.order.iter().enumerate() {
            write_bytes(&dir.join(format!("{i}.csv")), r.epfs[s].to_csv().as_bytes())?;
            index.push_str(&format!("{i},\"{}\"\n", format!("{s:?}").replace('"', "'")));
        }
        write_bytes(&dir.join("root.csv"), r.epfs[&root].to_csv().as_bytes())?;
        write_bytes(&dir.join("index.csv"), index.as_bytes())?;
    }
    println!("OPT {},{}", r.opt.0, r.opt.1);
    Ok(())
}

pub fn solve(a: &SolveArgs) -> Result<(), CliError> {
    match load_game(&a.game)? {
        AnyGame::Tree(g) => solve_game(&g, a),
        AnyGame::Tantrum(g) => solve_game(&g, a),
        AnyGame::Rc(g) => solve_game(&g, a),
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    let cfg = match path {
        Some(p) => serde_json::from_str::<TrainConfig>(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_train<G: Game, B: BoundsProvider<G>>(
    g: &G,
    b: &B,
    cfg: TrainConfig,
    epochs: u64,
    a: &TrainArgs,
) -> Result<(), CliError> {
    let metrics_path = a.out.join("metrics.csv");
    let (mut t, mut metrics) = match &a.resume {
        Some(p) => {
            let c = Checkpoint::load(p)?;
            let t = Trainer::resume(g, b, cfg, c.model, Some(c.opt), c.epoch)?;
            let prior = read_text(&metrics_path).unwrap_or_else(|_| format!("{METRICS_HEADER}\n"));
            (t, prior)
        }
        None => (Trainer::new(g, b, cfg)?, format!("{METRICS_HEADER}\n")),
    };
    t.run(epochs, |row| {
        log::info!("epoch {} mean loss {}", row.epoch, row.mean_loss);
        metrics.push_str(&metrics_line(row));
        metrics.push('\n');
    })?;
    Checkpoint {
        model: t.model.clone(),
        opt: t.opt.clone(),
        epoch: t.epoch,
    }
    .save(&a.out.join("checkpoint.bin"))?;
    write_bytes(&metrics_path, metrics.as_bytes())?;
    Ok(())
}

fn unsupported(mode: BoundsMode, what: &str) -> CliError {
    CliError::config(format!("bounds mode {mode:?} is not available for {what}"))
}

/// Run `$body` with `$g` bound to the game and `$b` to the configured
/// bounds provider.
macro_rules! with_bounds {
    ($game:expr, $mode:expr, |$g:ident, $b:ident| $body:expr) => {
        match ($game, $mode) {
            (AnyGame::Tree($g), BoundsMode::Exact) => {
                let $b = TableBounds {
                    table: compute_bounds(&$g)?,
                };
                $body
            }
            (AnyGame::Tree(_), m) => Err(unsupported(m, "explicit trees")),
            (AnyGame::Tantrum($g), BoundsMode::Exact) if !$g.is_featurized() => {
                let $b = TableBounds {
                    table: compute_bounds(&$g)?,
                };
                $body
            }
            (AnyGame::Tantrum($g), BoundsMode::Exact | BoundsMode::Analytic) => {
                let $b = AnalyticBounds;
                $body
            }
            (AnyGame::Tantrum(_), m) => Err(unsupported(m, "Tantrum")),
            (AnyGame::Rc($g), BoundsMode::Exact) => {
                let $b = TableBounds {
                    table: compute_bounds(&$g)?,
                };
                $body
            }
            (AnyGame::Rc($g), BoundsMode::Approximate { exact_depth }) => {
                let $b = RcApproxBounds::new(exact_depth);
                $body
            }
            (AnyGame::Rc(_), m) => Err(unsupported(m, "resource collection")),
        }
    };
}

pub fn train(a: &TrainArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let epochs = a.epochs.unwrap_or(cfg.epochs);
    let game = load_game(&a.game)?;
    let mode = cfg.bounds;
    with_bounds!(game, mode, |g, b| run_train(&g, &b, cfg, epochs, a))
}

#[derive(Serialize)]
struct EvalDoc {
    report: sefce_core::eval::EvalReport,
    instances: Vec<sefce_core::eval::InstanceReport>,
    mean_kappa: Option<f64>,
    mean_greedy_kappa: Option<f64>,
}

fn baselines_tantrum(g: &TantrumGame, opt1: Option<f64>) -> Result<Vec<BaselineReport>, CliError> {
    let root = g.root();
    let p = greedy_tantrum_profile(g, &root)?;
    let r1 = expected_payoffs(g, &p, &root)?.0;
    Ok(vec![BaselineReport {
        name: "greedy".into(),
        r1,
        kappa: opt1.and_then(|o| kappa(r1, o)),
    }])
}

fn baselines_rc(g: &sefce_core::game::RcGame, opt1: Option<f64>) -> Result<Vec<BaselineReport>, CliError> {
    let p = nonstrategic_rc_profile(g)?;
    let r1 = expected_payoffs(g, &p, &g.root())?.0;
    Ok(vec![BaselineReport {
        name: "non-strategic".into(),
        r1,
        kappa: opt1.and_then(|o| kappa(r1, o)),
    }])
}

fn profile_from_doc<G: Game>(g: &G, doc: &ResultDoc) -> Result<StrategyProfile<G::State>, CliError> {
    let e = enumerate(g, &g.root(), sefce_core::solver::DEFAULT_STATE_BUDGET)?;
    let by_id: HashMap<String, &G::State> = e.order.iter().map(|s| (format!("{s:?}"), s)).collect();
    let mut p = StrategyProfile::default();
    for rec in &doc.states {
        let Some(d) = &rec.decision else { continue };
        let s = by_id
            .get(&rec.id)
            .ok_or_else(|| CliError::config(format!("result state {} is not in the game", rec.id)))?;
        p.decisions.insert((*s).clone(), d.clone());
    }
    Ok(p)
}

fn eval_result<G: Game>(g: &G, doc: &ResultDoc, exact: bool) -> Result<sefce_core::eval::EvalReport, CliError> {
    let p = profile_from_doc(g, doc)?;
    let b = compute_bounds(g)?;
    let opt = if exact { Some(solver::solve(g)?.opt) } else { None };
    Ok(evaluate_profile(
        g,
        &p,
        |s, cs| {
            let lo: Vec<f64> = cs.iter().map(|c| b.lo[c]).collect();
            child_taus(g.owner(s), &lo)
        },
        opt,
    )?)
}

pub fn eval(a: &EvalArgs, seed: u64) -> Result<(), CliError> {
    let game = load_game(&a.game)?;
    let exact = !a.no_exact;
    let mut doc = EvalDoc {
        report: match &a.result {
            Some(path) => {
                let rd: ResultDoc = serde_json::from_str(&read_text(path)?)?;
                match &game {
                    AnyGame::Tree(g) => eval_result(g, &rd, exact)?,
                    AnyGame::Tantrum(g) => eval_result(g, &rd, exact)?,
                    AnyGame::Rc(g) => eval_result(g, &rd, exact)?,
                }
            }
            None => {
                let cfg = load_config(a.config.as_deref())?;
                let ck = Checkpoint::load(a.checkpoint.as_ref().expect("clap requires one"))?;
                let model = ck.model;
                let mode = cfg.bounds;
                with_bounds!(game.clone(), mode, |g, b| Ok::<_, CliError>(evaluate_model(
                    &model, &g, &b, exact, None
                )?))?
            }
        },
        instances: Vec::new(),
        mean_kappa: None,
        mean_greedy_kappa: None,
    };
    let opt1 = doc.report.opt.map(|o| o.1);
    match &game {
        AnyGame::Tantrum(g) => {
            doc.report.baselines = baselines_tantrum(g, opt1)?;
            if let (Some(shift), Some(path)) = (g.family_shift(), &a.checkpoint) {
                let model = Checkpoint::load(path)?.model;
                let params = held_out(g.params().n, shift, seed, a.instances)?;
                doc.instances = featurized_instances(&model, g, &params, &AnalyticBounds)?;
                doc.mean_kappa = Some(mean(doc.instances.iter().map(|r| r.kappa)));
                doc.mean_greedy_kappa = Some(mean(doc.instances.iter().map(|r| r.greedy_kappa)));
            }
        }
        AnyGame::Rc(g) => doc.report.baselines = baselines_rc(g, opt1)?,
        AnyGame::Tree(_) => {}
    }
    write_json(&a.out.join("report.json"), &doc)?;
    println!(
        "compliant={} R1={} kappa={}",
        doc.report.audit.compliant,
        doc.report.r1,
        doc.report.kappa.map(|k| k.to_string()).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

pub fn plot(a: &PlotArgs) -> Result<(), CliError> {
    let mut series: Vec<(String, Epf)> = Vec::new();
    for item in &a.epfs {
        let (label, path) = match item.split_once('=') {
            Some((l, p)) => (l.to_string(), Path::new(p)),
            None => {
                let p = Path::new(item.as_str());
                let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (label, p)
            }
        };
        series.push((label, Epf::from_csv(&read_text(path)?)?));
    }
    write_bytes(&a.out.join("plot.svg"), render_svg(&series).as_bytes())?;
    Ok(())
}
