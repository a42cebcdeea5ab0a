//! Observations, datasets and the train/calibration split.
//!
//! Censoring is Type I: the censoring time `ctime` is observed for every unit,
//! the survival time only through `otime = min(T, ctime)`. Censoring is
//! assumed conditionally independent of the survival time given the
//! covariates; nothing here can check that, it is a modeling assumption.
//!
//! A unit counts as an *event* when `otime < ctime`. Equality is treated as
//! censored.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One observed unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub x: Vec<f64>,
    pub ctime: f64,
    pub otime: f64,
    /// Latent survival time; only known for synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_time: Option<f64>,
}

impl SurvivalRecord {
    pub fn new(x: Vec<f64>, ctime: f64, otime: f64) -> Result<Self> {
        let record = Self {
            x,
            ctime,
            otime,
            true_time: None,
        };
        record.check().map_err(|reason| Error::InvalidRecord { index: 0, reason })?;
        Ok(record)
    }

    /// Builds a record from its latent survival time; `otime` is `min(t, c)`.
    pub fn from_latent(x: Vec<f64>, ctime: f64, true_time: f64) -> Result<Self> {
        let record = Self {
            x,
            ctime,
            otime: true_time.min(ctime),
            true_time: Some(true_time),
        };
        record.check().map_err(|reason| Error::InvalidRecord { index: 0, reason })?;
        Ok(record)
    }

    pub fn is_event(&self) -> bool {
        self.otime < self.ctime
    }

    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        if let Some(v) = self.x.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite covariate {v}"));
        }
        if !(self.ctime >= 0.0) {
            return Err(format!("ctime must be >= 0, got {}", self.ctime));
        }
        if !(self.otime >= 0.0) {
            return Err(format!("otime must be >= 0, got {}", self.otime));
        }
        if self.otime > self.ctime {
            return Err(format!("otime {} exceeds ctime {}", self.otime, self.ctime));
        }
        if let Some(t) = self.true_time {
            if !(t >= 0.0) {
                return Err(format!("true_time must be >= 0, got {t}"));
            }
            if self.otime != t.min(self.ctime) {
                return Err(format!(
                    "otime {} != min(true_time {}, ctime {})",
                    self.otime, t, self.ctime
                ));
            }
        }
        Ok(())
    }
}

/// A collection of records sharing covariate dimension `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    p: usize,
}

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>, p: usize) -> Result<Self> {
        for (index, r) in records.iter().enumerate() {
            if r.x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.x.len(),
                });
            }
            r.check().map_err(|reason| Error::InvalidRecord { index, reason })?;
        }
        Ok(Self { records, p })
    }

    /// Infers `p` from the first record.
    pub fn from_records(records: Vec<SurvivalRecord>) -> Result<Self> {
        let p = records
            .first()
            .map(|r| r.x.len())
            .ok_or(Error::TooSmall {
                what: "dataset size",
                got: 0,
                need: 1,
            })?;
        Self::new(records, p)
    }

    pub fn empty(p: usize) -> Self {
        Self {
            records: Vec::new(),
            p,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SurvivalRecord> {
        self.records.iter()
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }

    /// True when every record carries its latent survival time.
    pub fn has_true_time(&self) -> bool {
        self.records.iter().all(|r| r.true_time.is_some())
    }

    pub fn ctimes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ctime).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            p: self.p,
        }
    }

    pub(crate) fn require_nonempty(&self, what: &'static str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::TooSmall { what, got: 0, need: 1 });
        }
        Ok(())
    }
}

/// How to divide a dataset into a training fold and a calibration fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn train_size(&self, n: usize) -> usize {
        (n as f64 * self.train_fraction).floor() as usize
    }
}

/// Randomly partitions `data` into `(train, calibration)`.
///
/// The training fold has `floor(n * train_fraction)` records; both folds keep
/// the original record order.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n < 4 {
        return Err(Error::TooSmall {
            what: "dataset size for splitting",
            got: n,
            need: 4,
        });
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = spec.train_size(n);
    if n_train < 1 || n - n_train < 2 {
        return Err(Error::TooSmall {
            what: "fold size (need |train| >= 1 and |calibration| >= 2)",
            got: n_train.min(n - n_train),
            need: 2,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, 0));
    let (train_idx, cal_idx) = order.split_at_mut(n_train);
    train_idx.sort_unstable();
    cal_idx.sort_unstable();
    Ok((data.subset(train_idx), data.subset(cal_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| SurvivalRecord::new(vec![i as f64], f64::INFINITY, i as f64 * 0.5).unwrap())
            .collect();
        Dataset::new(records, 1).unwrap()
    }

    #[test]
    fn record_invariants() {
        assert!(SurvivalRecord::new(vec![1.0], 2.0, 3.0).is_err());
        assert!(SurvivalRecord::new(vec![f64::NAN], 2.0, 1.0).is_err());
        assert!(SurvivalRecord::new(vec![1.0], -1.0, -2.0).is_err());
        let r = SurvivalRecord::from_latent(vec![0.0], 2.0, 5.0).unwrap();
        assert_eq!(r.otime, 2.0);
        assert!(!r.is_event());
        let r = SurvivalRecord::from_latent(vec![0.0], 2.0, 1.5).unwrap();
        assert!(r.is_event());
        // equality is censored
        assert!(!SurvivalRecord::new(vec![0.0], 2.0, 2.0).unwrap().is_event());
    }

    #[test]
    fn dataset_rejects_mixed_dimensions() {
        let a = SurvivalRecord::new(vec![1.0], 2.0, 1.0).unwrap();
        let b = SurvivalRecord::new(vec![1.0, 2.0], 2.0, 1.0).unwrap();
        assert!(matches!(
            Dataset::new(vec![a, b], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let (tr, ca) = split(&toy(2000), &SplitSpec { train_fraction: 0.5, seed: 3 }).unwrap();
        assert_eq!((tr.len(), ca.len()), (1000, 1000));
    }

    #[test]
    fn smallest_split_is_a_partition() {
        let data = toy(4);
        let (tr, ca) = split(&data, &SplitSpec { train_fraction: 0.5, seed: 11 }).unwrap();
        assert_eq!((tr.len(), ca.len()), (2, 2));
        let mut all: Vec<f64> = tr.iter().chain(ca.iter()).map(|r| r.x[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn split_is_deterministic() {
        let data = toy(50);
        let spec = SplitSpec { train_fraction: 0.3, seed: 99 };
        assert_eq!(split(&data, &spec).unwrap(), split(&data, &spec).unwrap());
        let other = split(&data, &SplitSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(split(&data, &spec).unwrap(), other);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split(&toy(3), &SplitSpec::default()),
            Err(Error::TooSmall { .. })
        ));
        // floor(4 * 0.9) = 3 leaves a single calibration point
        assert!(split(&toy(4), &SplitSpec { train_fraction: 0.9, seed: 0 }).is_err());
        assert!(split(&toy(10), &SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }
}
