//! Conformal lower prediction bounds for censored survival times.

pub mod calibration;
pub mod lpb;
pub mod pipeline;

pub use calibration::{
    calibrate_adaptive, estimate_alpha, find_knots, select_threshold, CalibrationResult, DEFAULT_EPS,
};
pub use lpb::{
    baseline_lpb, fixed_cutoff_lpb, CutoffWeights, FixedCutoffSpec, LpbModel, Method, Prediction, Predictor,
    Provenance,
};
pub use pipeline::{adaptive_lpb, Components, PipelineConfig};
