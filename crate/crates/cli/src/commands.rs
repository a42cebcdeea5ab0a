use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use conformal_survival::conformal::{Components, LpbModel, Method};
use conformal_survival::evaluate::{
    evaluate_model, paired_sign_test, run_benchmark, write_summary_csv, write_trials_csv, BenchmarkConfig,
    BenchmarkSummary,
};
use conformal_survival::io::{read_covariates, read_dataset, write_comments, write_dataset};
use conformal_survival::simulate::{generate, SettingSpec};
use conformal_survival::{split, Error};
use serde::{Deserialize, Serialize};

use crate::config::{provenance, RunConfig};
use crate::CliError;

/// Saved output of `train`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelBundle {
    pub provenance: Vec<String>,
    pub config: RunConfig,
    pub model: LpbModel,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Lib(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.simulate;
    let setting = SettingSpec::new(s.setting)?;
    let data = generate(&setting, s.n, s.seed)?;
    let mut header = provenance("simulate", cfg, &[("seed", s.seed)]);
    header.push(format!("setting {} n {}", s.setting, s.n));
    let mut out = sink(cfg.paths.output.as_deref())?;
    write_dataset(&mut out, &data, &header)?;
    out.flush()?;
    Ok(())
}

fn trace_path(cfg: &RunConfig, model: &Path) -> Option<PathBuf> {
    match (&cfg.paths.trace, cfg.method) {
        (Some(p), _) => Some(p.clone()),
        (None, Method::AdaptiveT | Method::AdaptiveCt) => Some(model.with_extension("trace.csv")),
        (None, _) => None,
    }
}

pub fn load_model(path: &Path) -> Result<ModelBundle, CliError> {
    let bundle: ModelBundle = serde_json::from_reader(open(path)?).map_err(Error::from)?;
    Ok(bundle)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let data_path = required(&cfg.paths.data, "data")?;
    let model_path = required(&cfg.paths.model, "model")?;
    let data = read_dataset(open(data_path)?)?;
    let (train, cal) = split(&data, &cfg.split)?;
    let parts = Components::fit(&train, &cfg.pipeline)?;
    if cfg.require_convergence && !parts.cox.model.converged {
        return Err(Error::Numerical(format!(
            "Cox fit did not converge within {} iterations",
            cfg.pipeline.cox.max_iter
        ))
        .into());
    }
    let model = parts.build(&cal, cfg.alpha, cfg.method)?;
    let header = provenance(
        "train",
        cfg,
        &[("split", cfg.split.seed), ("forest", cfg.pipeline.forest_seed)],
    );

    if let Some(path) = trace_path(cfg, model_path) {
        let mut out = BufWriter::new(File::create(&path)?);
        write_comments(&mut out, &header)?;
        writeln!(out, "knot,alpha_hat,running_sup")?;
        if let Some(cal) = &model.provenance.calibration {
            for ((a, v), s) in cal.trace().zip(&cal.running_sup) {
                writeln!(out, "{a},{v},{s}")?;
            }
        }
        out.flush()?;
    }

    let a_hat = model.a_hat();
    let bundle = ModelBundle {
        provenance: header,
        config: cfg.clone(),
        model,
    };
    let mut out = BufWriter::new(File::create(model_path)?);
    serde_json::to_writer_pretty(&mut out, &bundle).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    match a_hat {
        Some(a) => eprintln!("trained {} on {} + {} rows, a_hat = {a}", cfg.method, train.len(), cal.len()),
        None => eprintln!("trained {} on {} + {} rows", cfg.method, train.len(), cal.len()),
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let bundle = load_model(required(&cfg.paths.model, "model")?)?;
    let (p, rows) = read_covariates(open(required(&cfg.paths.input, "input")?)?)?;
    if p != bundle.model.p {
        return Err(Error::DimensionMismatch {
            expected: bundle.model.p,
            found: p,
        }
        .into());
    }
    let preds = bundle.model.predict_many(&rows)?;
    let mut out = sink(cfg.paths.output.as_deref())?;
    write_comments(&mut out, &bundle.provenance)?;
    writeln!(out, "lpb,vacuous")?;
    for pr in preds {
        writeln!(out, "{},{}", pr.lpb, pr.vacuous)?;
    }
    out.flush()?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let bundle = load_model(required(&cfg.paths.model, "model")?)?;
    let data = read_dataset(open(required(&cfg.paths.data, "data")?)?)?;
    let m = evaluate_model(&bundle.model, &data)?;
    let mut out = sink(cfg.paths.output.as_deref())?;
    write_comments(&mut out, &bundle.provenance)?;
    writeln!(out, "metric,value")?;
    writeln!(out, "n,{}", data.len())?;
    if let Some(c) = m.coverage {
        writeln!(out, "coverage,{c}")?;
    }
    writeln!(out, "avg_lpb,{}", m.avg_lpb)?;
    writeln!(out, "beta_lo,{}", m.beta_lo)?;
    writeln!(out, "beta_hi,{}", m.beta_hi)?;
    out.flush()?;
    Ok(())
}

fn report(summary: &BenchmarkSummary) {
    let id = summary.config.setting.id();
    for m in &summary.methods {
        let mean = |s: Option<conformal_survival::evaluate::Stats>| s.map(|s| format!("{:.4}", s.mean)).unwrap_or_else(|| "-".into());
        let sd = m.coverage.map(|s| format!("{:.4}", s.sd)).unwrap_or_else(|| "-".into());
        println!(
            "setting {id} {:<12} ok {:>3} failed {:>3} coverage {} (sd {sd}) avg_lpb {} wall {}s",
            m.method.as_str(),
            m.n_ok,
            m.n_failed,
            mean(m.coverage),
            mean(m.avg_lpb),
            mean(m.wall_time),
        );
        if m.n_failed > 0 {
            eprintln!(
                "warning: setting {id} {}: {} of {} trials failed; statistics use N = {}",
                m.method, m.n_failed, summary.config.n_trials, m.n_ok
            );
        }
    }
    let has = |x: Method| summary.config.methods.contains(&x);
    for (a, b) in [(Method::AdaptiveCt, Method::Fixed), (Method::Fixed, Method::Baseline)] {
        if has(a) && has(b) {
            let (x, y) = summary.paired(a, b, |m| Some(m.avg_lpb));
            let t = paired_sign_test(&x, &y);
            println!(
                "setting {id} avg_lpb {a} vs {b}: {}+ {}- {}= p = {:.3e}",
                t.positive, t.negative, t.ties, t.p_value
            );
        }
    }
}

pub fn benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let b = &cfg.benchmark;
    if let Some(w) = b.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    }
    let settings = b
        .settings
        .iter()
        .map(|&id| SettingSpec::new(id))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summaries = Vec::new();
    for setting in settings {
        let mut bc = BenchmarkConfig::new(setting, b.trials, b.seed);
        bc.methods = b.methods.clone();
        bc.sizes = b.sizes;
        bc.alpha = cfg.alpha;
        bc.pipeline = cfg.pipeline.clone();
        let start = Instant::now();
        let summary = run_benchmark(&bc)?;
        eprintln!(
            "setting {} done: {} trials in {:.1}s",
            setting.id(),
            b.trials,
            start.elapsed().as_secs_f64()
        );
        report(&summary);
        summaries.push(summary);
    }

    let dir = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let header = provenance("benchmark", cfg, &[("master", b.seed)]);
    let mut trials = BufWriter::new(File::create(dir.join("trials.csv"))?);
    write_comments(&mut trials, &header)?;
    write_trials_csv(&mut trials, &summaries)?;
    trials.flush()?;
    let mut summary = BufWriter::new(File::create(dir.join("summary.csv"))?);
    write_comments(&mut summary, &header)?;
    write_summary_csv(&mut summary, &summaries)?;
    summary.flush()?;
    Ok(())
}
