//! Censoring-time model and the weights derived from it.

pub mod forest;
pub mod weights;

pub use forest::{fit_censoring_forest, CensoringForest, ConditionalDistribution, ForestParams, Node, Tree};
pub use weights::{
    default_weight_cap, inverse_probability_weight, make_weight_function, BoundWeight, CalibrationWeights, FnWeights,
    UnitWeights, WeightFunction,
};
