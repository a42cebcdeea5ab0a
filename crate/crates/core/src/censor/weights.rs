//! Inverse censoring-probability weights `w_a(x) ~ 1 / P(C >= f_a(x) | X = x)`.

use crate::censor::forest::CensoringForest;
use crate::error::{Error, Result};
use crate::regressors::{BoundFamily, Curve};

/// Weights used by adaptive calibration: for each covariate vector, a map
/// `a -> w_a(x)`.
pub trait CalibrationWeights: Send + Sync {
    fn point<'s>(&'s self, x: &[f64]) -> Curve<'s>;

    fn weight(&self, x: &[f64], a: f64) -> f64 {
        self.point(x)(a)
    }

    /// `(a, f_a(x)) -> w_a(x)`, where `f_a(x)` is the bound of the family
    /// being calibrated. Implementations tied to that family may use the
    /// supplied value instead of recomputing it.
    fn point_given_bound<'s>(&'s self, x: &[f64]) -> BoundWeight<'s> {
        let curve = self.point(x);
        Box::new(move |a, _| curve(a))
    }
}

/// `(a, f_a(x)) -> weight` for one fixed covariate vector.
pub type BoundWeight<'s> = Box<dyn Fn(f64, f64) -> f64 + Send + Sync + 's>;

/// `w == 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitWeights;

impl CalibrationWeights for UnitWeights {
    fn point<'s>(&'s self, _x: &[f64]) -> Curve<'s> {
        Box::new(|_| 1.0)
    }
}

/// Closure `(x, a) -> w` as weights.
#[derive(Clone)]
pub struct FnWeights<G>(pub G);

impl<G> CalibrationWeights for FnWeights<G>
where
    G: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn point<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let x = x.to_vec();
        Box::new(move |a| (self.0)(&x, a))
    }
}

/// `min(1 / max(survival, 1 / cap), cap)`; always in `[1, cap]` for `cap >= 1`.
pub fn inverse_probability_weight(survival: f64, cap: f64) -> f64 {
    (1.0 / survival.max(1.0 / cap)).min(cap)
}

/// Default weight cap `max(ln n, 1)` for a calibration fold of size `n`.
pub fn default_weight_cap(n_cal: usize) -> f64 {
    (n_cal as f64).ln().max(1.0)
}

/// Forest-estimated weights for a bound family.
#[derive(Clone, Copy)]
pub struct WeightFunction<'f> {
    forest: &'f CensoringForest,
    family: &'f dyn BoundFamily,
    cap: f64,
}

pub fn make_weight_function<'f>(
    forest: &'f CensoringForest,
    family: &'f dyn BoundFamily,
    cap: f64,
) -> Result<WeightFunction<'f>> {
    if !(cap >= 1.0) {
        return Err(Error::InvalidArgument(format!("weight cap must be >= 1, got {cap}")));
    }
    Ok(WeightFunction { forest, family, cap })
}

impl WeightFunction<'_> {
    pub fn cap(&self) -> f64 {
        self.cap
    }
}

impl CalibrationWeights for WeightFunction<'_> {
    fn point<'s>(&'s self, x: &[f64]) -> Curve<'s> {
        let dist = self.forest.conditional(x);
        let bound = self.family.curve(x);
        let cap = self.cap;
        Box::new(move |a| inverse_probability_weight(dist.survival(bound(a)), cap))
    }

    fn point_given_bound<'s>(&'s self, x: &[f64]) -> BoundWeight<'s> {
        let dist = self.forest.conditional(x);
        let cap = self.cap;
        Box::new(move |_, f| inverse_probability_weight(dist.survival(f), cap))
    }
}
