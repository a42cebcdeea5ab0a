//! Lower prediction bounds and the three ways of calibrating them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::CalibrationResult;
use crate::censor::{inverse_probability_weight, CensoringForest, ForestParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quantile::SortedAtoms;
use crate::regressors::{BoundFamily, CoxOptions, ModelFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Conformalized quantile regression on the censored time.
    Baseline,
    /// Weighted conformal inference above a fixed cutoff.
    Fixed,
    /// Adaptive cutoff with the plain quantile family.
    AdaptiveT,
    /// Adaptive cutoff with the censoring-truncated family.
    AdaptiveCt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Fixed, Method::AdaptiveT, Method::AdaptiveCt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Fixed => "fixed",
            Method::AdaptiveT => "adaptive-t",
            Method::AdaptiveCt => "adaptive-ct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {s:?} (expected baseline, fixed, adaptive-t or adaptive-ct)"
                ))
            })
    }
}

/// A clamped bound and whether clamping made it vacuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub lpb: f64,
    /// The unclamped bound was not positive (including `-inf`).
    pub vacuous: bool,
}

impl Prediction {
    fn clamp(raw: f64) -> Self {
        if raw > 0.0 {
            Prediction { lpb: raw, vacuous: false }
        } else {
            Prediction { lpb: 0.0, vacuous: true }
        }
    }
}

/// `q - correction`, with `-inf` whenever the correction is `+inf`.
fn corrected(q: f64, correction: f64) -> f64 {
    let v = q - correction;
    if correction == f64::INFINITY || v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Weight attached to a calibration or test point in the fixed-cutoff method.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CutoffWeights {
    Unit,
    /// `min(1 / max(P(C >= cutoff | x), 1 / cap), cap)` from a censoring forest.
    Forest {
        forest: Arc<CensoringForest>,
        cutoff: f64,
        cap: f64,
    },
    /// In-memory weight function; cannot be serialized.
    #[serde(skip)]
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl CutoffWeights {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CutoffWeights::Custom(Arc::new(f))
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        match self {
            CutoffWeights::Unit => 1.0,
            CutoffWeights::Forest { forest, cutoff, cap } => {
                inverse_probability_weight(forest.censoring_survival(x, *cutoff), *cap)
            }
            CutoffWeights::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for CutoffWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutoffWeights::Unit => f.write_str("Unit"),
            CutoffWeights::Forest { cutoff, cap, .. } => f
                .debug_struct("Forest")
                .field("cutoff", cutoff)
                .field("cap", cap)
                .finish_non_exhaustive(),
            CutoffWeights::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// How the fixed cutoff `c0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum FixedCutoffSpec {
    Value(f64),
    /// Empirical quantile of the training censoring times.
    TrainQuantile(f64),
}

impl Default for FixedCutoffSpec {
    fn default() -> Self {
        FixedCutoffSpec::TrainQuantile(0.5)
    }
}

impl FixedCutoffSpec {
    pub fn resolve(&self, train: &Dataset) -> Result<f64> {
        let c0 = match *self {
            FixedCutoffSpec::Value(v) => v,
            FixedCutoffSpec::TrainQuantile(q) => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "cutoff quantile must lie in (0, 1), got {q}"
                    )));
                }
                train.require_nonempty("training fold")?;
                SortedAtoms::from_atoms(train.iter().map(|r| (r.ctime, 1.0))).quantile(q)
            }
        };
        if c0 > 0.0 && c0.is_finite() {
            Ok(c0)
        } else {
            Err(Error::InvalidArgument(format!("cutoff c0 must be positive and finite, got {c0}")))
        }
    }
}

/// Everything needed to turn a covariate vector into a bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Predictor {
    /// `q_level(x) - correction`.
    Baseline {
        family: ModelFamily,
        level: f64,
        #[serde(with = "crate::serde_ext::f64_ext")]
        correction: f64,
    },
    /// `q_level(x)` minus a weighted quantile whose `+inf` atom carries `w(x)`.
    FixedCutoff {
        family: ModelFamily,
        level: f64,
        cutoff: f64,
        alpha: f64,
        scores: SortedAtoms,
        weights: CutoffWeights,
    },
    /// `f_{a_hat}(x)`.
    Adaptive { family: ModelFamily, a_hat: f64 },
}

impl Predictor {
    fn raw(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::Baseline {
                family,
                level,
                correction,
            } => corrected(family.bound(x, *level), *correction),
            Predictor::FixedCutoff {
                family,
                level,
                alpha,
                scores,
                weights,
                ..
            } => {
                let correction = scores.quantile_with_infinite_atom(1.0 - alpha, weights.weight(x));
                corrected(family.bound(x, *level), correction)
            }
            Predictor::Adaptive { family, a_hat } => family.bound(x, *a_hat),
        }
    }
}

/// Settings and intermediate results recorded with a fitted model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub alpha: f64,
    pub n_train: Option<usize>,
    pub n_cal: usize,
    pub cox: Option<CoxOptions>,
    pub cox_converged: Option<bool>,
    pub forest: Option<ForestParams>,
    pub forest_seed: Option<u64>,
    pub weight_cap: Option<f64>,
    pub cutoff: Option<f64>,
    /// Number of calibration points with `ctime >= cutoff`.
    pub n_filtered: Option<usize>,
    pub beta: Option<f64>,
    pub eps: Option<f64>,
    #[serde(default, with = "crate::serde_ext::f64_ext_opt")]
    pub correction: Option<f64>,
    pub calibration: Option<CalibrationResult>,
}

/// A calibrated lower prediction bound `x -> L(x) >= 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpbModel {
    pub method: Method,
    pub p: usize,
    pub predictor: Predictor,
    pub provenance: Provenance,
}

impl LpbModel {
    /// Bound at `x`, clamped at 0.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x.len(),
            });
        }
        Ok(Prediction::clamp(self.predictor.raw(x)))
    }

    /// Unclamped bound; may be negative or `-inf`.
    pub fn raw_bound(&self, x: &[f64]) -> f64 {
        self.predictor.raw(x)
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        rows.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        data.records().par_iter().map(|r| self.predict(&r.x)).collect()
    }

    pub fn a_hat(&self) -> Option<f64> {
        match &self.predictor {
            Predictor::Adaptive { a_hat, .. } => Some(*a_hat),
            _ => None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Split-conformal correction of `q_alpha` against the censored times:
/// scores `V_i = q_alpha(X_i) - T~_i` and `L(x) = q_alpha(x) - Q_{1-alpha}`
/// of the scores plus an atom at `+inf`.
pub fn baseline_lpb(family: ModelFamily, cal: &Dataset, alpha: f64) -> Result<LpbModel> {
    check_alpha(alpha)?;
    cal.require_nonempty("calibration fold")?;
    let scores = SortedAtoms::from_atoms(
        cal.records()
            .par_iter()
            .map(|r| (family.bound(&r.x, alpha) - r.otime, 1.0))
            .collect::<Vec<_>>(),
    );
    let correction = scores.quantile_with_infinite_atom(1.0 - alpha, 1.0);
    Ok(LpbModel {
        method: Method::Baseline,
        p: cal.p(),
        predictor: Predictor::Baseline {
            family,
            level: alpha,
            correction,
        },
        provenance: Provenance {
            alpha,
            n_cal: cal.len(),
            correction: Some(correction),
            ..Default::default()
        },
    })
}

/// Weighted split conformal on the calibration points with `C_i >= c0`,
/// scores `V_i = q_alpha(X_i) - min(T~_i, c0)`.
pub fn fixed_cutoff_lpb(
    family: ModelFamily,
    cal: &Dataset,
    alpha: f64,
    cutoff: f64,
    weights: CutoffWeights,
) -> Result<LpbModel> {
    check_alpha(alpha)?;
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::InvalidArgument(format!("cutoff c0 must be positive and finite, got {cutoff}")));
    }
    let atoms: Vec<(f64, f64)> = cal
        .records()
        .par_iter()
        .filter(|r| r.ctime >= cutoff)
        .map(|r| (family.bound(&r.x, alpha) - r.otime.min(cutoff), weights.weight(&r.x)))
        .collect();
    if atoms.is_empty() {
        return Err(Error::EmptyFilteredCalibration { cutoff });
    }
    if let Some(&(_, w)) = atoms.iter().find(|a| !(a.1 > 0.0 && a.1.is_finite())) {
        return Err(Error::Numerical(format!("calibration weight must be positive and finite, got {w}")));
    }
    let n_filtered = atoms.len();
    let cap = match &weights {
        CutoffWeights::Forest { cap, .. } => Some(*cap),
        _ => None,
    };
    Ok(LpbModel {
        method: Method::Fixed,
        p: cal.p(),
        predictor: Predictor::FixedCutoff {
            family,
            level: alpha,
            cutoff,
            alpha,
            scores: SortedAtoms::from_atoms(atoms),
            weights,
        },
        provenance: Provenance {
            alpha,
            n_cal: cal.len(),
            cutoff: Some(cutoff),
            n_filtered: Some(n_filtered),
            weight_cap: cap,
            ..Default::default()
        },
    })
}
