//! Scoring bounds on test data and running simulation benchmarks.
//!
//! With the latent time known, empirical coverage is `mean 1{L(X_i) < T_i}`.
//! From censored data alone the coverage is bracketed by
//!
//! ```text
//! beta_lo = mean 1{T~_i >= L(X_i)}
//! beta_hi = 1 - mean 1{T~_i < L(X_i), T~_i < C_i}
//! ```

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::censor::fit_censoring_forest;
use crate::conformal::{Components, LpbModel, Method, PipelineConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{cox_quantile_family, fit_cox};
use crate::rng::derive_seed;
use crate::simulate::{generate, SettingSpec};

/// Test-set metrics of one bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the test set has no latent times.
    pub coverage: Option<f64>,
    pub avg_lpb: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
}

fn mean_of(n: usize, count: usize) -> f64 {
    count as f64 / n as f64
}

/// Empirical coverage `mean 1{L_i < T_i}` for precomputed bounds.
pub fn coverage_of(bounds: &[f64], test: &Dataset) -> Result<f64> {
    test.require_nonempty("test set")?;
    let mut hits = 0;
    for (l, r) in bounds.iter().zip(test.iter()) {
        let t = r
            .true_time
            .ok_or_else(|| Error::Schema("coverage needs a true_time column".into()))?;
        if *l < t {
            hits += 1;
        }
    }
    Ok(mean_of(test.len(), hits))
}

/// `(beta_lo, beta_hi)` for precomputed bounds.
pub fn coverage_bounds_of(bounds: &[f64], test: &Dataset) -> Result<(f64, f64)> {
    test.require_nonempty("test set")?;
    let mut lo = 0;
    let mut miss = 0;
    for (&l, r) in bounds.iter().zip(test.iter()) {
        if r.otime >= l {
            lo += 1;
        } else if r.otime < r.ctime {
            miss += 1;
        }
    }
    Ok((mean_of(test.len(), lo), mean_of(test.len(), test.len() - miss)))
}

fn bounds(model: &LpbModel, test: &Dataset) -> Result<Vec<f64>> {
    Ok(model.predict_dataset(test)?.into_iter().map(|p| p.lpb).collect())
}

pub fn coverage(model: &LpbModel, test: &Dataset) -> Result<f64> {
    coverage_of(&bounds(model, test)?, test)
}

pub fn average_lpb(model: &LpbModel, test: &Dataset) -> Result<f64> {
    test.require_nonempty("test set")?;
    let b = bounds(model, test)?;
    Ok(b.iter().sum::<f64>() / b.len() as f64)
}

pub fn coverage_bounds(model: &LpbModel, test: &Dataset) -> Result<(f64, f64)> {
    coverage_bounds_of(&bounds(model, test)?, test)
}

/// All metrics from one pass of predictions.
pub fn evaluate_model(model: &LpbModel, test: &Dataset) -> Result<Metrics> {
    test.require_nonempty("test set")?;
    let b = bounds(model, test)?;
    let coverage = if test.has_true_time() {
        Some(coverage_of(&b, test)?)
    } else {
        None
    };
    let (beta_lo, beta_hi) = coverage_bounds_of(&b, test)?;
    Ok(Metrics {
        coverage,
        avg_lpb: b.iter().sum::<f64>() / b.len() as f64,
        beta_lo,
        beta_hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs with `a > b`.
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    /// Two-sided exact binomial p-value; 1 when all pairs tie.
    pub p_value: f64,
}

/// Paired sign test of `a` against `b`; tied pairs are dropped.
pub fn paired_sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let mut positive = 0;
    let mut negative = 0;
    let mut ties = 0;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            positive += 1;
        } else if x < y {
            negative += 1;
        } else {
            ties += 1;
        }
    }
    let n = positive + negative;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = positive.min(negative) as u64;
        let tail = Binomial::new(0.5, n as u64).expect("valid binomial").cdf(k);
        (2.0 * tail).min(1.0)
    };
    SignTest {
        positive,
        negative,
        ties,
        p_value,
    }
}

/// Five-number summary plus mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn interpolated(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Stats {
            n,
            mean,
            sd,
            min: sorted[0],
            q1: interpolated(&sorted, 0.25),
            median: interpolated(&sorted, 0.5),
            q3: interpolated(&sorted, 0.75),
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub train: usize,
    pub cal: usize,
    pub test: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            train: 1000,
            cal: 1000,
            test: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub setting: SettingSpec,
    pub methods: Vec<Method>,
    pub n_trials: usize,
    pub sizes: Sizes,
    pub alpha: f64,
    pub seed: u64,
    /// Its `forest_seed` is replaced by a per-trial seed.
    pub pipeline: PipelineConfig,
}

impl BenchmarkConfig {
    pub fn new(setting: SettingSpec, n_trials: usize, seed: u64) -> Self {
        Self {
            setting,
            methods: Method::ALL.to_vec(),
            n_trials,
            sizes: Sizes::default(),
            alpha: 0.1,
            seed,
            pipeline: PipelineConfig::default(),
        }
    }

    /// Seed of trial `trial`; the train, calibration and test folds and the
    /// forest use children 0, 1, 2 and 3 of it.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(derive_seed(self.seed, u64::from(self.setting.id())), trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub setting: u32,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    /// `None` when the trial failed.
    pub metrics: Option<Metrics>,
    pub a_hat: Option<f64>,
    pub error: Option<String>,
    /// Shared component fitting plus the method's own calibration, seconds.
    pub wall_time: f64,
}

impl TrialReport {
    pub fn is_ok(&self) -> bool {
        self.metrics.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub coverage: Option<Stats>,
    pub avg_lpb: Option<Stats>,
    pub beta_lo: Option<Stats>,
    pub beta_hi: Option<Stats>,
    pub a_hat: Option<Stats>,
    pub wall_time: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub config: BenchmarkConfig,
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<TrialReport>,
}

impl BenchmarkSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-trial values of one metric for `method`, in trial order; failed
    /// trials are skipped.
    pub fn series(&self, method: Method, metric: impl Fn(&Metrics) -> Option<f64>) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.method == method)
            .filter_map(|t| t.metrics.as_ref().and_then(&metric))
            .collect()
    }

    /// Values of one metric for two methods on the trials where both succeeded.
    pub fn paired(
        &self,
        a: Method,
        b: Method,
        metric: impl Fn(&Metrics) -> Option<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let value = |m: Method, trial: usize| {
            self.trials
                .iter()
                .find(|t| t.method == m && t.trial == trial)
                .and_then(|t| t.metrics.as_ref())
                .and_then(&metric)
        };
        (0..self.config.n_trials)
            .filter_map(|k| Some((value(a, k)?, value(b, k)?)))
            .unzip()
    }
}

fn run_trial(config: &BenchmarkConfig, trial: usize) -> Vec<TrialReport> {
    let seed = config.trial_seed(trial);
    let report = |method, metrics, a_hat, error, wall_time| TrialReport {
        setting: config.setting.id(),
        trial,
        seed,
        method,
        metrics,
        a_hat,
        error,
        wall_time,
    };
    let fail_all = |e: Error| {
        config
            .methods
            .iter()
            .map(|&m| report(m, None, None, Some(e.to_string()), 0.0))
            .collect()
    };
    let folds = (|| -> Result<_> {
        Ok((
            generate(&config.setting, config.sizes.train, derive_seed(seed, 0))?,
            generate(&config.setting, config.sizes.cal, derive_seed(seed, 1))?,
            generate(&config.setting, config.sizes.test, derive_seed(seed, 2))?,
        ))
    })();
    let (train, cal, test) = match folds {
        Ok(f) => f,
        Err(e) => return fail_all(e),
    };
    let mut pipeline = config.pipeline.clone();
    pipeline.forest_seed = derive_seed(seed, 3);

    let start = Instant::now();
    let cox = match fit_cox(&train, &pipeline.cox) {
        Ok(m) => cox_quantile_family(m),
        Err(e) => return fail_all(e),
    };
    let cox_time = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let forest = match fit_censoring_forest(&train, &pipeline.forest, pipeline.forest_seed) {
        Ok(f) => std::sync::Arc::new(f),
        Err(e) => return fail_all(e),
    };
    let forest_time = start.elapsed().as_secs_f64();
    let cutoff = match pipeline.cutoff.resolve(&train) {
        Ok(c) => c,
        Err(e) => return fail_all(e),
    };
    let components = Components {
        cox,
        forest,
        cutoff,
        n_train: train.len(),
        config: pipeline,
    };

    config
        .methods
        .iter()
        .map(|&method| {
            let shared = match method {
                Method::Baseline => cox_time,
                _ => cox_time + forest_time,
            };
            let start = Instant::now();
            let built = components.build(&cal, config.alpha, method);
            let elapsed = shared + start.elapsed().as_secs_f64();
            match built.and_then(|m| Ok((evaluate_model(&m, &test)?, m.a_hat()))) {
                Ok((metrics, a_hat)) => report(method, Some(metrics), a_hat, None, elapsed),
                Err(e) => report(method, None, None, Some(e.to_string()), elapsed),
            }
        })
        .collect()
}

fn summarize(method: Method, trials: &[TrialReport]) -> MethodSummary {
    let mine: Vec<&TrialReport> = trials.iter().filter(|t| t.method == method).collect();
    let ok: Vec<&Metrics> = mine.iter().filter_map(|t| t.metrics.as_ref()).collect();
    let stat = |f: &dyn Fn(&Metrics) -> Option<f64>| Stats::of(&ok.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
    MethodSummary {
        method,
        n_ok: ok.len(),
        n_failed: mine.len() - ok.len(),
        coverage: stat(&|m| m.coverage),
        avg_lpb: stat(&|m| Some(m.avg_lpb)),
        beta_lo: stat(&|m| Some(m.beta_lo)),
        beta_hi: stat(&|m| Some(m.beta_hi)),
        a_hat: Stats::of(&mine.iter().filter_map(|t| t.a_hat).collect::<Vec<_>>()),
        wall_time: Stats::of(&mine.iter().filter(|t| t.is_ok()).map(|t| t.wall_time).collect::<Vec<_>>()),
    }
}

/// Runs `n_trials` independent trials. Failed trials are kept in the report.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkSummary> {
    if config.n_trials == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one trial".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one method".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let trials: Vec<TrialReport> = (0..config.n_trials)
        .into_par_iter()
        .flat_map_iter(|k| run_trial(config, k))
        .collect();
    let methods = config.methods.iter().map(|&m| summarize(m, &trials)).collect();
    Ok(BenchmarkSummary {
        config: config.clone(),
        methods,
        trials,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial and method. Wall times are left out so the file is
/// reproducible byte for byte.
pub fn write_trials_csv<W: Write>(out: W, summaries: &[BenchmarkSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "setting", "trial", "seed", "method", "status", "coverage", "avg_lpb", "beta_lo", "beta_hi", "a_hat", "error",
    ])?;
    for s in summaries {
        for t in &s.trials {
            let m = t.metrics.as_ref();
            wtr.write_record([
                t.setting.to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.method.to_string(),
                if t.is_ok() { "ok" } else { "failed" }.to_string(),
                opt(m.and_then(|m| m.coverage)),
                opt(m.map(|m| m.avg_lpb)),
                opt(m.map(|m| m.beta_lo)),
                opt(m.map(|m| m.beta_hi)),
                opt(t.a_hat),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row per setting, method and metric, without timings.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[BenchmarkSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "setting", "method", "metric", "n_ok", "n_failed", "mean", "sd", "min", "q1", "median", "q3", "max",
    ])?;
    for s in summaries {
        for m in &s.methods {
            let metrics = [
                ("coverage", m.coverage),
                ("avg_lpb", m.avg_lpb),
                ("beta_lo", m.beta_lo),
                ("beta_hi", m.beta_hi),
                ("a_hat", m.a_hat),
            ];
            for (name, stats) in metrics {
                let cells: Vec<String> = match stats {
                    Some(st) => [st.mean, st.sd, st.min, st.q1, st.median, st.q3, st.max]
                        .iter()
                        .map(|v| v.to_string())
                        .collect(),
                    None => vec![String::new(); 7],
                };
                let mut row = vec![
                    s.config.setting.id().to_string(),
                    m.method.to_string(),
                    name.to_string(),
                    m.n_ok.to_string(),
                    m.n_failed.to_string(),
                ];
                row.extend(cells);
                wtr.write_record(&row)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{Predictor, Provenance};
    use crate::data::SurvivalRecord;
    use crate::regressors::{FnFamily, ModelFamily};

    fn constant_model(values: Vec<f64>) -> LpbModel {
        // bound = values[x as index]
        LpbModel {
            method: Method::AdaptiveT,
            p: 1,
            predictor: Predictor::Adaptive {
                family: ModelFamily::custom(FnFamily(move |x: &[f64], _a: f64| values[x[0] as usize])),
                a_hat: 0.5,
            },
            provenance: Provenance::default(),
        }
    }

    fn test_set(rows: &[(f64, f64, Option<f64>)]) -> Dataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(o, c, t))| SurvivalRecord {
                x: vec![i as f64],
                ctime: c,
                otime: o,
                true_time: t,
            })
            .collect();
        Dataset::new(records, 1).unwrap()
    }

    #[test]
    fn three_row_coverage() {
        let test = test_set(&[(2.0, 9.0, Some(2.0)), (2.0, 9.0, Some(2.0)), (2.0, 9.0, Some(2.0))]);
        let model = constant_model(vec![1.0, 2.0, 3.0]);
        assert_eq!(coverage(&model, &test).unwrap(), 1.0 / 3.0);
        assert_eq!(average_lpb(&model, &test).unwrap(), 2.0);
        assert_eq!(coverage(&constant_model(vec![0.0; 3]), &test).unwrap(), 1.0);
        assert_eq!(coverage_of(&[f64::INFINITY; 3], &test).unwrap(), 0.0);
    }

    #[test]
    fn coverage_needs_truth() {
        let test = test_set(&[(2.0, 9.0, None)]);
        assert!(matches!(coverage(&constant_model(vec![0.0]), &test), Err(Error::Schema(_))));
        let m = evaluate_model(&constant_model(vec![0.0]), &test).unwrap();
        assert_eq!(m.coverage, None);
    }

    #[test]
    fn beta_fixture() {
        let test = test_set(&[(2.0, 5.0, None), (4.0, 4.0, None), (6.0, 9.0, None)]);
        let (lo, hi) = coverage_bounds(&constant_model(vec![3.0, 3.0, 5.0]), &test).unwrap();
        assert_eq!(lo, 2.0 / 3.0);
        assert_eq!(hi, 2.0 / 3.0);
        let (lo, hi) = coverage_bounds(&constant_model(vec![0.0; 3]), &test).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
        let censored = test_set(&[(2.0, 2.0, None), (4.0, 4.0, None)]);
        assert_eq!(coverage_bounds_of(&[100.0, 100.0], &censored).unwrap().1, 1.0);
    }

    #[test]
    fn sign_test_values() {
        // 10 positive, 0 negative: p = 2 * 0.5^10
        let a = vec![1.0; 12];
        let mut b = vec![0.0; 10];
        b.extend([1.0, 1.0]);
        let t = paired_sign_test(&a, &b);
        assert_eq!((t.positive, t.negative, t.ties), (10, 0, 2));
        assert!((t.p_value - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert_eq!(paired_sign_test(&[1.0], &[1.0]).p_value, 1.0);
        let t = paired_sign_test(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn stats_quartiles() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        assert!((s.sd - 2.5f64.sqrt()).abs() < 1e-15);
        let one = Stats::of(&[0.7]).unwrap();
        assert_eq!((one.sd, one.median), (0.0, 0.7));
        assert!(Stats::of(&[]).is_none());
    }
}
