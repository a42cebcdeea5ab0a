//! Families of candidate lower bounds `(x, a) -> f_a(x)`.
//!
//! Every family is nondecreasing in `a` for fixed `x`, and `f_0(x) = -inf`.
//! Calibration works with one covariate vector at a time, so the central
//! method is [`BoundFamily::curve`], which does the per-point work once and
//! returns the map `a -> f_a(x)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cox::{quantile_for_ratio, CoxModel, CoxQuantile};
use crate::censor::CensoringForest;
use crate::error::{Error, Result};

/// `a -> value` for one fixed covariate vector.
pub type Curve<'s> = Box<dyn Fn(f64) -> f64 + Send + Sync + 's>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    QuantileT,
    CtTruncated,
    Rearranged,
    Custom,
}

pub trait BoundFamily: Send + Sync {
    fn kind(&self) -> FamilyKind;

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s>;

    fn bound(&self, x: &[f64], a: f64) -> f64 {
        self.curve(x)(a)
    }

    /// Like [`bound`](Self::bound) but rejects levels outside `[0, 1]`.
    fn try_bound(&self, x: &[f64], a: f64) -> Result<f64> {
        check_level(a)?;
        Ok(self.bound(x, a))
    }
}

fn check_level(a: f64) -> Result<()> {
    if (0.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level a must lie in [0, 1], got {a}")))
    }
}

/// `q_a(x) = inf { t : 1 - S(t | x) >= a }` from a fitted Cox model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxQuantileFamily {
    pub model: CoxModel,
}

/// Quantile family of a fitted Cox model.
pub fn cox_quantile_family(model: CoxModel) -> CoxQuantileFamily {
    CoxQuantileFamily { model }
}

impl CoxQuantileFamily {
    /// Quantile with its saturation flag.
    pub fn quantile(&self, x: &[f64], a: f64) -> Result<CoxQuantile> {
        check_level(a)?;
        Ok(quantile_for_ratio(&self.model.baseline, self.model.hazard_ratio(x), a))
    }
}

impl BoundFamily for CoxQuantileFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::QuantileT
    }

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let ratio = self.model.hazard_ratio(x);
        let baseline = &self.model.baseline;
        Box::new(move |a| quantile_for_ratio(baseline, ratio, a).value)
    }
}

/// `f_a(x) = min { q_a(x), qC_level(x) }`: survival quantiles truncated at a
/// conditional quantile of the censoring time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtFamily {
    pub base: CoxQuantileFamily,
    pub forest: Arc<CensoringForest>,
    /// Level of the censoring quantile, `1 - beta`.
    pub level: f64,
}

impl CtFamily {
    pub fn new(base: CoxQuantileFamily, forest: Arc<CensoringForest>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            base,
            forest,
            level: 1.0 - beta,
        })
    }

    pub fn truncation(&self, x: &[f64]) -> f64 {
        self.forest.conditional(x).quantile(self.level)
    }
}

impl BoundFamily for CtFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::CtTruncated
    }

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let cap = self.truncation(x);
        let base = self.base.curve(x);
        Box::new(move |a| base(a).min(cap))
    }
}

/// Truncation level `beta = 1 / ln n` for a calibration fold of size `n`,
/// kept inside `(0, 0.5]`.
pub fn truncation_beta(n_cal: usize) -> f64 {
    let log_n = (n_cal as f64).ln();
    if log_n > 2.0 {
        1.0 / log_n
    } else {
        0.5
    }
}

/// Wraps a closure as a family. Levels `a <= 0` map to `-inf`.
#[derive(Clone)]
pub struct FnFamily<G>(pub G);

impl<G> fmt::Debug for FnFamily<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnFamily(..)")
    }
}

impl<G> BoundFamily for FnFamily<G>
where
    G: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn kind(&self) -> FamilyKind {
        FamilyKind::Custom
    }

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let x = x.to_vec();
        Box::new(move |a| if a <= 0.0 { f64::NEG_INFINITY } else { (self.0)(&x, a) })
    }
}

/// Monotone rearrangement of a raw quantile map evaluated on a grid of levels.
///
/// At each `x` the raw outputs on the grid are sorted; between grid points
/// the curve interpolates linearly in `a`, and outside the grid it is held
/// constant (apart from `a = 0`, which is `-inf`).
#[derive(Clone)]
pub struct RearrangedFamily<R> {
    raw: R,
    grid: Vec<f64>,
}

impl<R> fmt::Debug for RearrangedFamily<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RearrangedFamily").field("grid", &self.grid).finish()
    }
}

pub fn rearrange_monotone<R>(raw: R, grid: Vec<f64>) -> Result<RearrangedFamily<R>>
where
    R: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty level grid".into()));
    }
    if grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument("grid levels must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("grid must be sorted ascending".into()));
    }
    Ok(RearrangedFamily { raw, grid })
}

impl<R> RearrangedFamily<R>
where
    R: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    /// Sorted raw outputs at the grid points.
    pub fn grid_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self.grid.iter().map(|&a| (self.raw)(x, a)).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl<R> BoundFamily for RearrangedFamily<R>
where
    R: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn kind(&self) -> FamilyKind {
        FamilyKind::Rearranged
    }

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let values = self.grid_values(x);
        let grid = &self.grid;
        Box::new(move |a| {
            if a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let k = grid.partition_point(|&g| g <= a);
            if k == 0 {
                return values[0];
            }
            if k == grid.len() {
                return values[k - 1];
            }
            let (g0, g1, v0, v1) = (grid[k - 1], grid[k], values[k - 1], values[k]);
            if v0 == v1 || !v0.is_finite() || !v1.is_finite() {
                return v0;
            }
            v0 + (a - g0) / (g1 - g0) * (v1 - v0)
        })
    }
}

/// The families a serialized model can carry.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelFamily {
    QuantileT(CoxQuantileFamily),
    CtTruncated(CtFamily),
    /// In-memory family; cannot be serialized.
    #[serde(skip)]
    Custom(Arc<dyn BoundFamily>),
}

impl ModelFamily {
    pub fn custom(family: impl BoundFamily + 'static) -> Self {
        ModelFamily::Custom(Arc::new(family))
    }
}

impl fmt::Debug for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFamily::QuantileT(m) => f.debug_tuple("QuantileT").field(&m.model.beta).finish(),
            ModelFamily::CtTruncated(c) => f.debug_struct("CtTruncated").field("level", &c.level).finish(),
            ModelFamily::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl BoundFamily for ModelFamily {
    fn kind(&self) -> FamilyKind {
        match self {
            ModelFamily::QuantileT(f) => f.kind(),
            ModelFamily::CtTruncated(f) => f.kind(),
            ModelFamily::Custom(f) => f.kind(),
        }
    }

    fn curve<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        match self {
            ModelFamily::QuantileT(f) => f.curve(x),
            ModelFamily::CtTruncated(f) => f.curve(x),
            ModelFamily::Custom(f) => f.curve(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SurvivalRecord};
    use crate::regressors::cox::{fit_cox, CoxOptions};

    #[test]
    fn rearrangement_sorts_grid_outputs() {
        let raw = |_: &[f64], a: f64| [3.0, 1.0, 2.0][((a * 10.0).round() as usize) - 1];
        let fam = rearrange_monotone(raw, vec![0.1, 0.2, 0.3]).unwrap();
        let c = fam.curve(&[0.0]);
        assert_eq!([c(0.1), c(0.2), c(0.3)], [1.0, 2.0, 3.0]);
        assert_eq!(c(0.15), 1.5);
        assert_eq!(c(0.0), f64::NEG_INFINITY);
        assert_eq!(c(0.05), 1.0);
        assert_eq!(c(0.9), 3.0);
    }

    #[test]
    fn rearrangement_keeps_monotone_input() {
        let raw = |x: &[f64], a: f64| x[0] + a * a;
        let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let fam = rearrange_monotone(raw, grid.clone()).unwrap();
        for &a in &grid {
            assert_eq!(fam.bound(&[2.0], a), 2.0 + a * a);
        }
    }

    #[test]
    fn rearrangement_rejects_bad_grids() {
        let raw = |_: &[f64], a: f64| a;
        assert!(rearrange_monotone(raw, vec![]).is_err());
        assert!(rearrange_monotone(raw, vec![0.5, 0.2]).is_err());
        assert!(rearrange_monotone(raw, vec![0.5, 1.2]).is_err());
    }

    #[test]
    fn beta_follows_log_of_calibration_size() {
        assert_eq!(truncation_beta(1000), 1.0 / 1000f64.ln());
        // |I2| = e^2 gives beta = 0.5
        assert!((truncation_beta(8) - 0.5).abs() < 0.02);
        assert_eq!(truncation_beta(7), 0.5);
        assert_eq!(truncation_beta(1), 0.5);
    }

    /// Pooled product-limit style quantile computed by direct enumeration:
    /// cumulative hazard sum_{event times s <= t} d(s) / n_at_risk(s), then
    /// the first event time whose 1 - exp(-H) reaches `a`.
    fn pooled_quantile(times: &[(f64, bool)], a: f64) -> f64 {
        let mut event_times: Vec<f64> = times.iter().filter(|t| t.1).map(|t| t.0).collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let mut h = 0.0;
        for &s in &event_times {
            let d = times.iter().filter(|t| t.1 && t.0 == s).count() as f64;
            let at_risk = times.iter().filter(|t| t.0 >= s).count() as f64;
            h += d / at_risk;
            if 1.0 - (-h).exp() >= a {
                return s;
            }
        }
        *event_times.last().unwrap()
    }

    #[test]
    fn zero_beta_family_is_pooled_quantile() {
        let times = [
            (0.7, true),
            (1.2, true),
            (1.9, false),
            (2.4, true),
            (3.1, true),
            (3.3, false),
            (4.0, true),
            (5.5, true),
            (6.2, false),
            (8.0, true),
        ];
        let records: Vec<_> = times
            .iter()
            .map(|&(t, e)| {
                let c = if e { 100.0 } else { t };
                SurvivalRecord::new(vec![1.0], c, t).unwrap()
            })
            .collect();
        let model = fit_cox(&Dataset::new(records, 1).unwrap(), &CoxOptions::default()).unwrap();
        assert_eq!(model.beta, vec![0.0]);
        let fam = cox_quantile_family(model);
        for a in [0.05, 0.1, 0.2, 0.35, 0.5, 0.6, 0.8] {
            for x in [-3.0, 0.0, 7.5] {
                assert_eq!(fam.bound(&[x], a), pooled_quantile(&times, a), "a = {a}");
            }
        }
        assert_eq!(fam.bound(&[0.0], 0.0), f64::NEG_INFINITY);
        let top = fam.quantile(&[0.0], 1.0).unwrap();
        assert!(top.saturated);
        assert_eq!(top.value, 8.0);
        assert!(fam.try_bound(&[0.0], 1.5).is_err());
        assert!(fam.try_bound(&[0.0], -0.1).is_err());
    }
}
