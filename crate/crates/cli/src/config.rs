//! Run configuration: a TOML file, overridden field by field by flags.

use std::fs;
use std::path::{Path, PathBuf};

use conformal_survival::conformal::{Method, PipelineConfig};
use conformal_survival::evaluate::Sizes;
use conformal_survival::SplitSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Target miscoverage.
    pub alpha: f64,
    /// Bound built by `train`.
    pub method: Method,
    /// Fail `train` with a numerical error when the Cox fit did not converge.
    pub require_convergence: bool,
    pub split: SplitSpec,
    pub pipeline: PipelineConfig,
    pub simulate: SimulateSection,
    pub benchmark: BenchmarkSection,
    /// Not part of the config hash.
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            method: Method::AdaptiveCt,
            require_convergence: false,
            split: SplitSpec::default(),
            pipeline: PipelineConfig::default(),
            simulate: SimulateSection::default(),
            benchmark: BenchmarkSection::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub setting: u32,
    pub n: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            setting: 1,
            n: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub settings: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
    pub sizes: Sizes,
    pub methods: Vec<Method>,
    /// Worker threads; absent means available parallelism. Not hashed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            settings: (1..=6).collect(),
            trials: 50,
            seed: 0,
            sizes: Sizes::default(),
            methods: Method::ALL.to_vec(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the TOML text with paths and the worker count cleared.
    pub fn hash(&self) -> String {
        let mut bare = self.clone();
        bare.paths = Paths::default();
        bare.benchmark.workers = None;
        hex::encode(Sha256::digest(bare.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.pipeline.eps > 0.0) {
            return Err(CliError::Usage(format!("eps must be positive, got {}", self.pipeline.eps)));
        }
        Ok(())
    }
}

/// Comment lines written at the top of every output file.
pub fn provenance(command: &str, config: &RunConfig, seeds: &[(&str, u64)]) -> Vec<String> {
    let seeds: Vec<String> = seeds.iter().map(|(k, v)| format!("{k}={v}")).collect();
    vec![
        format!("csurv {} {command}", env!("CARGO_PKG_VERSION")),
        format!("config-sha256 {}", config.hash()),
        format!("seeds {}", seeds.join(" ")),
    ]
}
