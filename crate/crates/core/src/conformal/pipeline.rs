//! End-to-end construction of the four bounds from a training and a
//! calibration fold.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::calibration::{calibrate_adaptive, DEFAULT_EPS};
use super::lpb::{baseline_lpb, fixed_cutoff_lpb, CutoffWeights, FixedCutoffSpec, LpbModel, Method, Predictor, Provenance};
use crate::censor::{default_weight_cap, fit_censoring_forest, make_weight_function, CensoringForest, ForestParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{cox_quantile_family, fit_cox, truncation_beta, CoxOptions, CoxQuantileFamily, CtFamily, ModelFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cox: CoxOptions,
    pub forest: ForestParams,
    pub forest_seed: u64,
    /// Knot bisection tolerance.
    pub eps: f64,
    /// `None` uses `max(ln |calibration fold|, 1)`.
    pub weight_cap: Option<f64>,
    pub cutoff: FixedCutoffSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cox: CoxOptions::default(),
            forest: ForestParams::default(),
            forest_seed: 0,
            eps: DEFAULT_EPS,
            weight_cap: None,
            cutoff: FixedCutoffSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn weight_cap_for(&self, n_cal: usize) -> f64 {
        self.weight_cap.unwrap_or_else(|| default_weight_cap(n_cal))
    }
}

/// Models fit on the training fold, shared by every method.
#[derive(Debug, Clone)]
pub struct Components {
    pub cox: CoxQuantileFamily,
    pub forest: Arc<CensoringForest>,
    pub cutoff: f64,
    pub n_train: usize,
    pub config: PipelineConfig,
}

impl Components {
    pub fn fit(train: &Dataset, config: &PipelineConfig) -> Result<Self> {
        train.require_nonempty("training fold")?;
        let cox = cox_quantile_family(fit_cox(train, &config.cox)?);
        let forest = Arc::new(fit_censoring_forest(train, &config.forest, config.forest_seed)?);
        let cutoff = config.cutoff.resolve(train)?;
        Ok(Self {
            cox,
            forest,
            cutoff,
            n_train: train.len(),
            config: config.clone(),
        })
    }

    fn stamp(&self, mut model: LpbModel, cal: &Dataset) -> LpbModel {
        let prov = &mut model.provenance;
        prov.n_train = Some(self.n_train);
        prov.cox = Some(self.config.cox);
        prov.cox_converged = Some(self.cox.model.converged);
        if model.method != Method::Baseline {
            prov.forest = Some(self.config.forest);
            prov.forest_seed = Some(self.config.forest_seed);
            prov.weight_cap = Some(self.config.weight_cap_for(cal.len()));
        }
        model
    }

    pub fn baseline(&self, cal: &Dataset, alpha: f64) -> Result<LpbModel> {
        let model = baseline_lpb(ModelFamily::QuantileT(self.cox.clone()), cal, alpha)?;
        Ok(self.stamp(model, cal))
    }

    pub fn fixed(&self, cal: &Dataset, alpha: f64) -> Result<LpbModel> {
        let weights = CutoffWeights::Forest {
            forest: Arc::clone(&self.forest),
            cutoff: self.cutoff,
            cap: self.config.weight_cap_for(cal.len()),
        };
        let model = fixed_cutoff_lpb(ModelFamily::QuantileT(self.cox.clone()), cal, alpha, self.cutoff, weights)?;
        Ok(self.stamp(model, cal))
    }

    /// Adaptive calibration with the plain (`AdaptiveT`) or truncated
    /// (`AdaptiveCt`) family.
    pub fn adaptive(&self, cal: &Dataset, alpha: f64, method: Method) -> Result<LpbModel> {
        cal.require_nonempty("calibration fold")?;
        let (family, beta) = match method {
            Method::AdaptiveT => (ModelFamily::QuantileT(self.cox.clone()), None),
            Method::AdaptiveCt => {
                let beta = truncation_beta(cal.len());
                let ct = CtFamily::new(self.cox.clone(), Arc::clone(&self.forest), beta)?;
                (ModelFamily::CtTruncated(ct), Some(beta))
            }
            other => {
                return Err(Error::InvalidArgument(format!("{other} is not an adaptive method")));
            }
        };
        let cap = self.config.weight_cap_for(cal.len());
        let weights = make_weight_function(&self.forest, &family, cap)?;
        let calibration = calibrate_adaptive(&family, &weights, cal, alpha, self.config.eps)?;
        let a_hat = calibration.a_hat;
        let model = LpbModel {
            method,
            p: cal.p(),
            predictor: Predictor::Adaptive { family, a_hat },
            provenance: Provenance {
                alpha,
                n_cal: cal.len(),
                beta,
                eps: Some(self.config.eps),
                calibration: Some(calibration),
                ..Default::default()
            },
        };
        Ok(self.stamp(model, cal))
    }

    pub fn build(&self, cal: &Dataset, alpha: f64, method: Method) -> Result<LpbModel> {
        match method {
            Method::Baseline => self.baseline(cal, alpha),
            Method::Fixed => self.fixed(cal, alpha),
            Method::AdaptiveT | Method::AdaptiveCt => self.adaptive(cal, alpha, method),
        }
    }
}

/// Fits the components on `train` and runs adaptive calibration on `cal`.
pub fn adaptive_lpb(
    train: &Dataset,
    cal: &Dataset,
    alpha: f64,
    method: Method,
    config: &PipelineConfig,
) -> Result<LpbModel> {
    Components::fit(train, config)?.adaptive(cal, alpha, method)
}
