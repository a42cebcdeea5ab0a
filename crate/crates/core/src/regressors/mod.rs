//! Conditional quantile models for the survival time.

pub mod cox;
pub mod family;

pub use cox::{fit_cox, BaselineHazard, CoxModel, CoxOptions, CoxQuantile, PartialLikelihood, Standardization};
pub use family::{
    cox_quantile_family, rearrange_monotone, truncation_beta, BoundFamily, CoxQuantileFamily, CtFamily, Curve,
    FamilyKind, FnFamily, ModelFamily, RearrangedFamily,
};
