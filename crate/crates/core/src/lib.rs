//! Conformal lower prediction bounds for survival times under Type I right
//! censoring.
//!
//! The censoring time `C` is observed for every unit, the survival time `T`
//! only through `T~ = min(T, C)`. Given a training fold and a calibration
//! fold, the crate builds a bound `L(x)` with `P(T >= L(X)) >= 1 - alpha`:
//!
//! * a Cox model supplies a monotone family of candidate bounds `f_a(x)`,
//! * a quantile regression forest on `C` supplies inverse-censoring weights,
//! * calibration picks the level `a_hat` whose weighted miscoverage among
//!   calibration points with `f_a(X_i) <= C_i` stays below `alpha`.
//!
//! ```
//! use conformal_survival::conformal::{Components, Method, PipelineConfig};
//! use conformal_survival::simulate::{generate, SettingSpec};
//!
//! let setting = SettingSpec::new(1)?;
//! let train = generate(&setting, 300, 1)?;
//! let cal = generate(&setting, 300, 2)?;
//! let mut config = PipelineConfig::default();
//! config.forest.n_trees = 50;
//! let components = Components::fit(&train, &config)?;
//! let model = components.build(&cal, 0.1, Method::AdaptiveCt)?;
//! let bound = model.predict(&[2.0])?;
//! assert!(bound.lpb >= 0.0);
//! # Ok::<(), conformal_survival::Error>(())
//! ```

pub mod censor;
pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod quantile;
pub mod regressors;
pub mod rng;
pub mod serde_ext;
pub mod simulate;

pub use data::{split, Dataset, SplitSpec, SurvivalRecord};
pub use error::{Error, ErrorClass, Result};
pub use quantile::{weighted_quantile, SortedAtoms, WeightedAtoms};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/quantile.md")]
    pub mod quantile {}
    #[doc = include_str!("../../../book/src/cox.md")]
    pub mod cox {}
    #[doc = include_str!("../../../book/src/censoring.md")]
    pub mod censoring {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    pub mod calibration {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
