//! Weighted quantiles of discrete distributions.
//!
//! The quantile at level `tau` of atoms `(v_k, w_k)` is the smallest value
//! whose cumulative normalized weight reaches `tau`:
//!
//! ```text
//! Q_tau = min { v : sum_{v_k <= v} w_k / sum_k w_k >= tau }
//! ```
//!
//! Weights are normalized internally, so callers may pass any positive
//! multiples. `+inf` is an ordinary atom value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied when comparing cumulative weight with `tau * total`.
///
/// Accumulated sums such as `0.1 + 0.1 + ... ` land a few ulps below their
/// exact value; without the slack a level that is reached exactly would be
/// missed and the next atom returned.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A finite list of weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    atoms: Vec<(f64, f64)>,
}

impl WeightedAtoms {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("no atoms".into()));
        }
        for &(v, w) in &atoms {
            if v.is_nan() {
                return Err(Error::InvalidArgument("atom value is NaN".into()));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "atom weight must be positive and finite, got {w}"
                )));
            }
        }
        Ok(Self { atoms })
    }

    /// Atoms of unit weight.
    pub fn unit(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| (v, 1.0)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }
}

/// Quantile at level `tau` in `[0, 1]`.
pub fn weighted_quantile(atoms: &WeightedAtoms, tau: f64) -> f64 {
    SortedAtoms::from_atoms(atoms.atoms.iter().copied()).quantile(tau)
}

/// Atoms sorted by value with running cumulative weights, for repeated queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedAtoms {
    #[serde(with = "crate::serde_ext::f64_ext_vec")]
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SortedAtoms {
    /// Sorts atoms by value (ties keep input order) and accumulates weights.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::with_capacity(atoms.len());
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (v, w) in atoms {
            acc += w;
            values.push(v);
            cumulative.push(acc);
        }
        Self { values, cumulative }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn first_reaching(&self, target: f64) -> Option<usize> {
        let target = target * (1.0 - MASS_TOLERANCE);
        let k = self.cumulative.partition_point(|&c| c < target);
        (k < self.values.len()).then_some(k)
    }

    /// Quantile of the stored atoms alone.
    pub fn quantile(&self, tau: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&tau));
        match self.first_reaching(tau * self.total()) {
            Some(k) => self.values[k],
            None => *self.values.last().expect("quantile of empty atom list"),
        }
    }

    /// Quantile after appending an atom at `+inf` with weight `inf_weight`.
    pub fn quantile_with_infinite_atom(&self, tau: f64, inf_weight: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&tau));
        match self.first_reaching(tau * (self.total() + inf_weight)) {
            Some(k) => self.values[k],
            None => f64::INFINITY,
        }
    }
}
