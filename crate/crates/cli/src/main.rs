//! `sefce` command-line tool.

mod commands;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sefce", version, about = "Optimal Stackelberg correlated equilibria in game trees")]
struct Cli {
    /// Seed for every random stream; for `train` it replaces the
    /// configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a game spec (game.json) for a built-in generator.
    GenGame(GenArgs),
    /// Solve a game exactly and write the result document.
    Solve(SolveArgs),
    /// Train a frontier model; writes checkpoint.bin and metrics.csv.
    Train(TrainArgs),
    /// Audit and score a trained model or an exact result.
    Eval(EvalArgs),
    /// Render frontier CSV files as an SVG chart.
    Plot(PlotArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenKind {
    Fig1,
    Promise,
    Fig6,
    Tantrum,
    TantrumFeaturized,
    Rc,
    RandomTree,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub k2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Stages (Tantrum) or rounds (RC).
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Per-stage leader stakes; a single value is repeated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub q1: Vec<f64>,
    /// Per-stage follower stakes; a single value is repeated.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0])]
    pub q2: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    /// Grid side for RC.
    #[arg(long, default_value_t = 7)]
    pub j: usize,
    #[arg(long, default_value_t = 2.0)]
    pub length_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// State cap for random trees.
    #[arg(long, default_value_t = 50)]
    pub max_states: usize,
    #[arg(long, default_value_t = 0.2)]
    pub chance_frac: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one knot CSV per state under `epf/`.
    #[arg(long)]
    pub epf_csv: bool,
    /// Maximum number of states to enumerate.
    #[arg(long, default_value_t = sefce_core::solver::DEFAULT_STATE_BUDGET)]
    pub budget: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub game: PathBuf,
    /// Training configuration (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Epoch budget; overrides the configuration.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "result", required_unless_present = "result")]
    pub checkpoint: Option<PathBuf>,
    /// Result document from `solve`.
    #[arg(long)]
    pub result: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out instances scored for featurized Tantrum.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Skip the exact solve (no OPT, kappa or delta).
    #[arg(long)]
    pub no_exact: bool,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Knot CSV files, optionally as `label=path`.
    #[arg(long = "epf", required = true)]
    pub epfs: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::GenGame(a) => commands::gen_game(&a, cli.seed.unwrap_or(0)),
        Cmd::Solve(a) => commands::solve(&a),
        Cmd::Train(a) => commands::train(&a, cli.seed),
        Cmd::Eval(a) => commands::eval(&a, cli.seed.unwrap_or(0)),
        Cmd::Plot(a) => commands::plot(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
