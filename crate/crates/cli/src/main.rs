//! `csurv`: simulate data, fit and calibrate lower prediction bounds,
//! predict, evaluate and benchmark.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conformal_survival::conformal::{FixedCutoffSpec, Method};
use conformal_survival::{Error, ErrorClass};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "csurv", version, about = "Conformal lower prediction bounds for censored survival times")]
struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from one of the six settings.
    Simulate(SimulateArgs),
    /// Fit on the training fold, calibrate on the calibration fold, save the model.
    Train(TrainArgs),
    /// Lower bounds for the rows of a covariate CSV.
    Predict(PredictArgs),
    /// Coverage and bound metrics of a saved model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Repeated train/calibrate/test trials on synthetic settings.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    forest_seed: Option<u64>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    /// Knot bisection tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Upper clip of the inverse-probability weights.
    #[arg(long)]
    weight_cap: Option<f64>,
    /// Fixed cutoff value for the `fixed` method.
    #[arg(long, conflicts_with = "cutoff_quantile")]
    cutoff: Option<f64>,
    /// Fixed cutoff as a quantile of the training censoring times.
    #[arg(long)]
    cutoff_quantile: Option<f64>,
    #[arg(long)]
    cox_max_iter: Option<usize>,
    #[arg(long)]
    cox_tol: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV with x1..xp, ctime, otime.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Calibration trace CSV; defaults next to the model for adaptive methods.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    require_convergence: bool,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Covariate CSV; extra columns are ignored.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// `all` or a comma-separated list of setting ids.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of baseline, fixed, adaptive-t, adaptive-ct.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_cal: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for trials.csv and summary.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl PipelineFlags {
    fn apply(self, cfg: &mut RunConfig) {
        let p = &mut cfg.pipeline;
        set(&mut cfg.alpha, self.alpha);
        set(&mut p.forest_seed, self.forest_seed);
        set(&mut p.forest.n_trees, self.n_trees);
        set(&mut p.forest.min_leaf, self.min_leaf);
        set(&mut p.eps, self.eps);
        set(&mut p.cox.max_iter, self.cox_max_iter);
        set(&mut p.cox.tol, self.cox_tol);
        if self.max_depth.is_some() {
            p.forest.max_depth = self.max_depth;
        }
        if self.mtry.is_some() {
            p.forest.mtry = self.mtry;
        }
        if self.weight_cap.is_some() {
            p.weight_cap = self.weight_cap;
        }
        if let Some(c) = self.cutoff {
            p.cutoff = FixedCutoffSpec::Value(c);
        }
        if let Some(q) = self.cutoff_quantile {
            p.cutoff = FixedCutoffSpec::TrainQuantile(q);
        }
    }
}

fn parse_settings(raw: &str) -> Result<Vec<u32>, CliError> {
    if raw.trim() == "all" {
        return Ok((1..=6).collect());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("invalid setting {s:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => {
            set(&mut cfg.simulate.setting, a.setting);
            set(&mut cfg.simulate.n, a.n);
            set(&mut cfg.simulate.seed, a.seed);
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            commands::simulate(&cfg)
        }
        Command::Train(a) => {
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            if a.model.is_some() {
                cfg.paths.model = a.model;
            }
            if a.trace.is_some() {
                cfg.paths.trace = a.trace;
            }
            set(&mut cfg.method, a.method);
            set(&mut cfg.split.train_fraction, a.train_fraction);
            set(&mut cfg.split.seed, a.split_seed);
            cfg.require_convergence |= a.require_convergence;
            a.pipeline.apply(&mut cfg);
            commands::train(&cfg)
        }
        Command::Predict(a) => {
            if a.model.is_some() {
                cfg.paths.model = a.model;
            }
            if a.input.is_some() {
                cfg.paths.input = a.input;
            }
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            commands::predict(&cfg)
        }
        Command::Evaluate(a) => {
            if a.model.is_some() {
                cfg.paths.model = a.model;
            }
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            commands::evaluate(&cfg)
        }
        Command::Benchmark(a) => {
            if let Some(s) = a.setting {
                cfg.benchmark.settings = parse_settings(&s)?;
            }
            set(&mut cfg.benchmark.trials, a.trials);
            set(&mut cfg.benchmark.seed, a.seed);
            set(&mut cfg.benchmark.methods, a.methods);
            set(&mut cfg.benchmark.sizes.train, a.n_train);
            set(&mut cfg.benchmark.sizes.cal, a.n_cal);
            set(&mut cfg.benchmark.sizes.test, a.n_test);
            if a.workers.is_some() {
                cfg.benchmark.workers = a.workers;
            }
            if a.out_dir.is_some() {
                cfg.paths.out_dir = a.out_dir;
            }
            a.pipeline.apply(&mut cfg);
            commands::benchmark(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csurv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
