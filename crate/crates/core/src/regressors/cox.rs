//! Cox proportional hazards model.
//!
//! Coefficients are estimated by Newton's method on the partial
//! log-likelihood with Breslow's handling of tied event times; the cumulative
//! baseline hazard is the Breslow estimator at the fitted coefficients.
//! Covariates are standardized internally, and the model evaluates
//! `S(t | x) = exp(-H0(t) * exp(eta(x)))` with `eta` the standardized linear
//! predictor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Maximum number of step halvings per Newton iteration.
const MAX_HALVINGS: usize = 20;

/// Relative slack when comparing log-likelihoods; near the optimum the
/// increase of a Newton step is below the rounding error of the sum.
pub const LL_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

/// Per-covariate centering and scaling applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(data: &Dataset) -> Self {
        let p = data.p();
        let n = data.len() as f64;
        let mut shift = vec![0.0; p];
        for r in data.iter() {
            for (s, v) in shift.iter_mut().zip(&r.x) {
                *s += v / n;
            }
        }
        let mut scale = vec![0.0; p];
        for r in data.iter() {
            for ((s, v), m) in scale.iter_mut().zip(&r.x).zip(&shift) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Self { shift, scale }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            shift: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Right-continuous step function `t -> H0(t)` with jumps at event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Cumulative hazard just after each jump, nondecreasing.
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    /// Breslow estimator for the linear predictors `eta` of the training rows.
    pub fn breslow(otime: &[f64], event: &[bool], eta: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..otime.len()).collect();
        order.sort_by(|&a, &b| otime[b].total_cmp(&otime[a]));
        // descending sweep accumulates the risk set sum at each distinct time
        let mut risk = 0.0;
        let mut jumps: Vec<(f64, f64)> = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let t = otime[order[k]];
            let mut deaths = 0usize;
            let mut j = k;
            while j < order.len() && otime[order[j]] == t {
                risk += eta[order[j]].exp();
                if event[order[j]] {
                    deaths += 1;
                }
                j += 1;
            }
            if deaths > 0 {
                jumps.push((t, deaths as f64 / risk));
            }
            k = j;
        }
        jumps.reverse();
        let mut acc = 0.0;
        let (times, cumulative) = jumps
            .into_iter()
            .map(|(t, h)| {
                acc += h;
                (t, acc)
            })
            .unzip();
        Self { times, cumulative }
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn max_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Breslow partial log-likelihood of a fixed design.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    /// Rows sorted by observed time, descending.
    rows: Vec<Vec<f64>>,
    events: Vec<bool>,
    /// Start offsets of groups of tied times (in `rows` order) plus `n`.
    groups: Vec<usize>,
    p: usize,
}

impl PartialLikelihood {
    pub fn new(rows: Vec<Vec<f64>>, otime: &[f64], events: &[bool]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| otime[b].total_cmp(&otime[a]));
        let mut groups = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 || otime[order[pos - 1]] != otime[i] {
                groups.push(pos);
            }
        }
        groups.push(order.len());
        Self {
            rows: order.iter().map(|&i| rows[i].clone()).collect(),
            events: order.iter().map(|&i| events[i]).collect(),
            groups,
            p,
        }
    }

    /// Raw (unstandardized) covariates of a dataset.
    pub fn from_dataset(data: &Dataset) -> Self {
        let rows = data.iter().map(|r| r.x.clone()).collect();
        let otime: Vec<f64> = data.iter().map(|r| r.otime).collect();
        let events: Vec<bool> = data.iter().map(|r| r.is_event()).collect();
        Self::new(rows, &otime, &events)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    fn etas(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta, false).0
    }

    /// Score vector (gradient with respect to `beta`).
    pub fn score(&self, beta: &[f64]) -> Vec<f64> {
        self.evaluate(beta, false).1
    }

    /// Value, score and Hessian.
    pub fn evaluate(&self, beta: &[f64], hessian: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.p;
        let eta = self.etas(beta);
        let offset = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let offset = if offset.is_finite() { offset } else { 0.0 };

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = DMatrix::<f64>::zeros(if hessian { p } else { 0 }, if hessian { p } else { 0 });
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = DMatrix::<f64>::zeros(if hessian { p } else { 0 }, if hessian { p } else { 0 });

        for g in self.groups.windows(2) {
            let (start, end) = (g[0], g[1]);
            for i in start..end {
                let w = (eta[i] - offset).exp();
                s0 += w;
                for a in 0..p {
                    s1[a] += w * self.rows[i][a];
                    if hessian {
                        for b in 0..=a {
                            s2[(a, b)] += w * self.rows[i][a] * self.rows[i][b];
                        }
                    }
                }
            }
            let deaths = (start..end).filter(|&i| self.events[i]).count();
            if deaths == 0 {
                continue;
            }
            let d = deaths as f64;
            let log_s0 = s0.ln() + offset;
            for i in (start..end).filter(|&i| self.events[i]) {
                ll += eta[i] - log_s0;
                for a in 0..p {
                    grad[a] += self.rows[i][a];
                }
            }
            for a in 0..p {
                let mean_a = s1[a] / s0;
                grad[a] -= d * mean_a;
                if hessian {
                    for b in 0..=a {
                        let v = d * (s2[(a, b)] / s0 - mean_a * s1[b] / s0);
                        hess[(a, b)] -= v;
                    }
                }
            }
        }
        if hessian {
            for a in 0..p {
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            (ll, grad, Some(hess))
        } else {
            (ll, grad, None)
        }
    }
}

/// Fitted Cox model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    /// Coefficients on the standardized covariate scale.
    pub beta: Vec<f64>,
    pub standardization: Standardization,
    pub baseline: BaselineHazard,
    pub converged: bool,
    pub iterations: usize,
    /// Partial log-likelihood after each accepted step, starting at `beta = 0`.
    pub log_likelihood_path: Vec<f64>,
}

impl CoxModel {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Coefficients on the original covariate scale.
    pub fn coefficients(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.standardization.scale)
            .map(|(b, s)| b / s)
            .collect()
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.beta)
            .zip(self.standardization.shift.iter().zip(&self.standardization.scale))
            .map(|((v, b), (m, s))| b * (v - m) / s)
            .sum()
    }

    pub fn hazard_ratio(&self, x: &[f64]) -> f64 {
        self.linear_predictor(x).exp()
    }

    /// Estimated `P(T > t | x)`.
    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        (-self.baseline.at(t) * self.hazard_ratio(x)).exp()
    }
}

/// A conditional quantile together with a flag set when the requested level
/// lies beyond the estimated support and the largest event time is returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxQuantile {
    pub value: f64,
    pub saturated: bool,
}

/// `inf { t : 1 - S(t | x) >= a }` for a hazard ratio `ratio`.
pub(crate) fn quantile_for_ratio(baseline: &BaselineHazard, ratio: f64, a: f64) -> CoxQuantile {
    if a <= 0.0 {
        return CoxQuantile {
            value: f64::NEG_INFINITY,
            saturated: false,
        };
    }
    let Some(t_max) = baseline.max_time() else {
        return CoxQuantile {
            value: f64::INFINITY,
            saturated: true,
        };
    };
    // 1 - exp(-H r) >= a  <=>  H >= -ln(1 - a) / r
    let target = -(-a).ln_1p() / ratio;
    let k = baseline.cumulative.partition_point(|&h| h < target);
    if k < baseline.times.len() {
        CoxQuantile {
            value: baseline.times[k],
            saturated: false,
        }
    } else {
        CoxQuantile {
            value: t_max,
            saturated: true,
        }
    }
}

fn newton_direction(neg_hess: DMatrix<f64>, grad: &[f64]) -> Option<DVector<f64>> {
    let g = DVector::from_column_slice(grad);
    if let Some(ch) = neg_hess.clone().cholesky() {
        return Some(ch.solve(&g));
    }
    // singular information (e.g. a constant covariate): add a small ridge
    let p = grad.len();
    let scale = (0..p).map(|i| neg_hess[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let ridged = neg_hess + DMatrix::identity(p, p) * (1e-10 * scale);
    ridged.cholesky().map(|ch| ch.solve(&g))
}

/// Fits the Cox model by damped Newton iteration.
///
/// Fails only when the training fold has no events; non-convergence is
/// reported through [`CoxModel::converged`].
pub fn fit_cox(train: &Dataset, opts: &CoxOptions) -> Result<CoxModel> {
    train.require_nonempty("training fold size")?;
    if train.p() == 0 {
        return Err(Error::InvalidArgument("Cox model needs p >= 1".into()));
    }
    if !train.iter().any(|r| r.is_event()) {
        return Err(Error::NoEvents);
    }
    let standardization = Standardization::fit(train);
    let rows: Vec<Vec<f64>> = train.iter().map(|r| standardization.apply(&r.x)).collect();
    let otime: Vec<f64> = train.iter().map(|r| r.otime).collect();
    let events: Vec<bool> = train.iter().map(|r| r.is_event()).collect();
    let lik = PartialLikelihood::new(rows.clone(), &otime, &events);

    let p = train.p();
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut hess) = lik.evaluate(&beta, true);
    let mut path = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if grad.iter().all(|g| g.abs() <= opts.tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_hess = -hess.take().expect("hessian requested");
        let Some(dir) = newton_direction(neg_hess, &grad) else {
            return Err(Error::Numerical("Cox information matrix is not positive definite".into()));
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(dir.iter()).map(|(b, d)| b + step * d).collect();
            let cand_ll = lik.value(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - LL_ROUNDING * ll.abs().max(1.0) {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            // no ascent possible at floating point resolution
            break;
        };
        beta = next;
        let eval = lik.evaluate(&beta, true);
        ll = eval.0;
        grad = eval.1;
        hess = eval.2;
        path.push(ll);
    }
    if !converged && grad.iter().all(|g| g.abs() <= opts.tol) {
        converged = true;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("non-finite Cox coefficients".into()));
    }

    let eta: Vec<f64> = rows
        .iter()
        .map(|z| z.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let baseline = BaselineHazard::breslow(&otime, &events, &eta);
    Ok(CoxModel {
        beta,
        standardization,
        baseline,
        converged,
        iterations,
        log_likelihood_path: path,
    })
}
