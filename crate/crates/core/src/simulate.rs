//! Synthetic benchmark settings.
//!
//! In every setting `X ~ Unif([0, 4]^p)`, `log T | X ~ N(mu(X), sigma(X)^2)`
//! and `C | X` follows a setting-specific law, independent of `T` given `X`.
//!
//! | id | p  | mu(x)                              | sigma(x)    | C given X                         |
//! |----|----|------------------------------------|-------------|-----------------------------------|
//! | 1  | 1  | 0.632 x                            | 2           | Exp(0.1)                          |
//! | 2  | 1  | 3 if x > 2, else x                 | 0.5         | Exp(0.1)                          |
//! | 3  | 1  | 2 if x > 2, else x                 | 0.5         | Exp(0.25 + (6 + x) / 100)         |
//! | 4  | 1  | 3 if x > 2, else 1.5 x             | 0.5         | LogNormal(2 + (2 - x) / 50, 0.5)  |
//! | 5  | 10 | 0.126 (x1 + sqrt(x3 x5)) + 1       | 1           | Exp(x10 / 10 + 1 / 20)            |
//! | 6  | 10 | 0.126 (x1 + sqrt(x3 x5)) + 1       | (x2 + 2) / 4| Exp(x10 / 10 + 1 / 20)            |
//!
//! `Exp(r)` has rate `r` (mean `1 / r`); `LogNormal(m, s)` has log-mean `m`
//! and log-sd `s`.

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, SurvivalRecord};
use crate::error::{Error, Result};
use crate::rng;

/// Conditional law of the censoring time at one covariate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum CensoringLaw {
    Exponential { rate: f64 },
    LogNormal { log_mean: f64, log_sd: f64 },
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl CensoringLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CensoringLaw::Exponential { rate } => Exp::new(rate).expect("positive rate").sample(rng),
            CensoringLaw::LogNormal { log_mean, log_sd } => {
                LogNormal::new(log_mean, log_sd).expect("positive log-sd").sample(rng)
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            CensoringLaw::Exponential { rate } => -(-rate * t).exp_m1(),
            CensoringLaw::LogNormal { log_mean, log_sd } => std_normal().cdf((t.ln() - log_mean) / log_sd),
        }
    }

    /// `P(C >= t)`.
    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CensoringLaw::Exponential { rate } => 1.0 / rate,
            CensoringLaw::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
        }
    }
}

/// One of the six benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SettingSpec {
    id: u32,
}

impl TryFrom<u32> for SettingSpec {
    type Error = Error;

    fn try_from(id: u32) -> Result<Self> {
        SettingSpec::new(id)
    }
}

impl From<SettingSpec> for u32 {
    fn from(s: SettingSpec) -> u32 {
        s.id
    }
}

fn step(x: f64, high: f64, slope: f64) -> f64 {
    if x > 2.0 {
        high
    } else {
        slope * x
    }
}

impl SettingSpec {
    pub fn new(id: u32) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(Self { id })
        } else {
            Err(Error::UnknownSetting(id))
        }
    }

    pub fn all() -> impl Iterator<Item = SettingSpec> {
        (1..=6).map(|id| SettingSpec { id })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn p(&self) -> usize {
        if self.id <= 4 {
            1
        } else {
            10
        }
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        match self.id {
            1 => 0.632 * x[0],
            2 => step(x[0], 3.0, 1.0),
            3 => step(x[0], 2.0, 1.0),
            4 => step(x[0], 3.0, 1.5),
            _ => 0.126 * (x[0] + (x[2] * x[4]).sqrt()) + 1.0,
        }
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        match self.id {
            1 => 2.0,
            2..=4 => 0.5,
            5 => 1.0,
            _ => (x[1] + 2.0) / 4.0,
        }
    }

    pub fn censoring(&self, x: &[f64]) -> CensoringLaw {
        match self.id {
            1 | 2 => CensoringLaw::Exponential { rate: 0.1 },
            3 => CensoringLaw::Exponential {
                rate: 0.25 + (6.0 + x[0]) / 100.0,
            },
            4 => CensoringLaw::LogNormal {
                log_mean: 2.0 + (2.0 - x[0]) / 50.0,
                log_sd: 0.5,
            },
            _ => CensoringLaw::Exponential {
                rate: x[9] / 10.0 + 1.0 / 20.0,
            },
        }
    }

    /// Exact conditional `a`-quantile of `T` given `X = x`.
    pub fn oracle_quantile(&self, x: &[f64], a: f64) -> f64 {
        oracle_quantile(self, x, a)
    }

    /// Draws one record, latent time included.
    pub fn sample_record<R: Rng + ?Sized>(&self, rng: &mut R) -> SurvivalRecord {
        let x: Vec<f64> = (0..self.p()).map(|_| rng.random_range(0.0..4.0)).collect();
        let z: f64 = StandardNormal.sample(rng);
        let t = (self.mu(&x) + self.sigma(&x) * z).exp();
        let c = self.censoring(&x).sample(rng);
        SurvivalRecord::from_latent(x, c, t).expect("simulated record is valid")
    }
}

/// `n` independent records from `setting`, reproducible from `seed`.
pub fn generate(setting: &SettingSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, 0);
    let records = (0..n).map(|_| setting.sample_record(&mut rng)).collect();
    Dataset::new(records, setting.p())
}

/// `exp(mu(x) + sigma(x) * Phi^{-1}(a))`.
pub fn oracle_quantile(setting: &SettingSpec, x: &[f64], a: f64) -> f64 {
    (setting.mu(x) + setting.sigma(x) * std_normal().inverse_cdf(a)).exp()
}
