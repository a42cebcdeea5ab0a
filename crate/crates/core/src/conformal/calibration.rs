//! Adaptive-cutoff calibration.
//!
//! For a level `a`, the estimated miscoverage among calibration points that
//! pass the censoring filter is
//!
//! ```text
//! alpha_hat(a) = sum_i w_a(X_i) 1{T~_i < f_a(X_i) <= C_i}
//!              / sum_i w_a(X_i) 1{f_a(X_i) <= C_i}
//! ```
//!
//! `alpha_hat` only changes where some `f_a(X_i)` crosses `T~_i` or `C_i`,
//! so it is evaluated at those crossing levels (the knots) and the selected
//! level is the largest knot whose running supremum of `alpha_hat` stays at
//! or below the target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censor::{BoundWeight, CalibrationWeights};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{BoundFamily, Curve, FamilyKind};

/// Default bisection tolerance for knot locations.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub a_hat: f64,
    pub alpha: f64,
    pub eps: f64,
    pub family: FamilyKind,
    /// Ascending, deduplicated, always starting at 0.
    pub knots: Vec<f64>,
    /// `alpha_hat` at each knot.
    pub alpha_trace: Vec<f64>,
    pub running_sup: Vec<f64>,
}

impl CalibrationResult {
    pub fn trace(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().copied().zip(self.alpha_trace.iter().copied())
    }

    /// Threshold the same trace would give at another target level.
    pub fn a_hat_at(&self, alpha: f64) -> f64 {
        select_threshold(&self.knots, &self.alpha_trace, alpha)
    }
}

struct Prepared<'a> {
    bounds: Vec<Curve<'a>>,
    weights: Vec<BoundWeight<'a>>,
    otime: Vec<f64>,
    ctime: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(family: &'a dyn BoundFamily, weights: &'a dyn CalibrationWeights, cal: &Dataset) -> Self {
        let (bounds, weights) = cal
            .records()
            .par_iter()
            .map(|r| (family.curve(&r.x), weights.point_given_bound(&r.x)))
            .unzip();
        Self {
            bounds,
            weights,
            otime: cal.iter().map(|r| r.otime).collect(),
            ctime: cal.iter().map(|r| r.ctime).collect(),
        }
    }

    fn alpha_hat(&self, a: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.bounds.len() {
            let f = self.bounds[i](a);
            if f <= self.ctime[i] {
                let w = self.weights[i](a, f);
                den += w;
                if self.otime[i] < f {
                    num += w;
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            1.0
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

/// Estimated miscoverage `alpha_hat(a)`; 1 when no calibration point passes
/// the filter `f_a(X_i) <= C_i`.
pub fn estimate_alpha(
    a: f64,
    family: &dyn BoundFamily,
    weights: &dyn CalibrationWeights,
    cal: &Dataset,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("level a must lie in [0, 1], got {a}")));
    }
    Ok(Prepared::new(family, weights, cal).alpha_hat(a))
}

/// `sup { a in [0, 1] : f(a) <= y }` to within `eps`, for nondecreasing `f`
/// with `f(0) = -inf`. The returned level always satisfies `f(a) <= y`.
fn last_level_below(f: &dyn Fn(f64) -> f64, y: f64, eps: f64) -> f64 {
    if f(1.0) <= y {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > eps {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Knot set: 0 and, for each calibration point, the last levels at which the
/// bound stays at or below `T~_i` and at or below `C_i`.
pub fn find_knots(family: &dyn BoundFamily, cal: &Dataset, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut knots: Vec<f64> = cal
        .records()
        .par_iter()
        .flat_map_iter(|r| {
            let curve = family.curve(&r.x);
            [
                last_level_below(&curve, r.otime, eps),
                last_level_below(&curve, r.ctime, eps),
            ]
        })
        .collect();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    Ok(knots)
}

/// Largest knot whose running supremum of `alpha_hat` is at most `alpha`,
/// or 0 when none is.
pub fn select_threshold(knots: &[f64], alpha_trace: &[f64], alpha: f64) -> f64 {
    let mut sup = f64::NEG_INFINITY;
    let mut a_hat = 0.0;
    for (&a, &v) in knots.iter().zip(alpha_trace) {
        sup = sup.max(v);
        if sup > alpha {
            break;
        }
        a_hat = a;
    }
    a_hat
}

/// Runs the full adaptive calibration and keeps the trace.
pub fn calibrate_adaptive(
    family: &dyn BoundFamily,
    weights: &dyn CalibrationWeights,
    cal: &Dataset,
    alpha: f64,
    eps: f64,
) -> Result<CalibrationResult> {
    check_alpha(alpha)?;
    cal.require_nonempty("calibration fold")?;
    let knots = find_knots(family, cal, eps)?;
    let prepared = Prepared::new(family, weights, cal);
    let alpha_trace: Vec<f64> = knots.par_iter().map(|&a| prepared.alpha_hat(a)).collect();
    let running_sup = alpha_trace
        .iter()
        .scan(f64::NEG_INFINITY, |s, &v| {
            *s = f64::max(*s, v);
            Some(*s)
        })
        .collect();
    Ok(CalibrationResult {
        a_hat: select_threshold(&knots, &alpha_trace, alpha),
        alpha,
        eps,
        family: family.kind(),
        knots,
        alpha_trace,
        running_sup,
    })
}
