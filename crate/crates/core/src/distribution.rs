//! Categorical probability vectors over an anchor set — the currency every
//! pipeline stage trades in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for reference data transcribed from rounded survey tables.
pub const REFERENCE_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance for distributions computed inside the pipeline.
pub const COMPUTED_SUM_TOLERANCE: f64 = 1e-9;

/// A categorical probability distribution over an ordered anchor set.
///
/// Entries are nonnegative and sum to 1 (within the tolerance the
/// constructor was given). Anchor order is significant and preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    anchor_ids: Vec<String>,
    probs: Vec<f64>,
}

impl Distribution {
    /// Build a distribution from already-normalized probabilities, checked at
    /// the internal (computed) tolerance.
    pub fn new(anchor_ids: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(anchor_ids, probs, COMPUTED_SUM_TOLERANCE)
    }

    /// Same as [`Distribution::new`] but with the looser tolerance used for
    /// hand-transcribed reference rows.
    pub fn new_reference(anchor_ids: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(anchor_ids, probs, REFERENCE_SUM_TOLERANCE)
    }

    pub fn with_tolerance(anchor_ids: Vec<String>, probs: Vec<f64>, tol: f64) -> Result<Self> {
        if anchor_ids.len() != probs.len() {
            return Err(Error::InvalidDistribution {
                detail: format!(
                    "{} anchor ids but {} probabilities",
                    anchor_ids.len(),
                    probs.len()
                ),
            });
        }
        if anchor_ids.is_empty() {
            return Err(Error::InvalidDistribution {
                detail: "empty anchor set".into(),
            });
        }
        for (i, id) in anchor_ids.iter().enumerate() {
            if anchor_ids[..i].contains(id) {
                return Err(Error::InvalidDistribution {
                    detail: format!("duplicate anchor id {id:?}"),
                });
            }
        }
        for (id, &p) in anchor_ids.iter().zip(&probs) {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution {
                    detail: format!("probability for {id:?} is {p}"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution {
                detail: format!("probabilities sum to {sum} ≠ 1 ± {tol:e}"),
            });
        }
        Ok(Self { anchor_ids, probs })
    }

    /// Normalize arbitrary nonnegative weights into a distribution.
    pub fn from_weights(anchor_ids: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidDistribution {
                detail: format!("weights sum to {sum}, cannot normalize"),
            });
        }
        let probs = weights.iter().map(|w| w / sum).collect();
        Self::with_tolerance(anchor_ids, probs, COMPUTED_SUM_TOLERANCE)
    }

    pub fn uniform(anchor_ids: Vec<String>) -> Result<Self> {
        let n = anchor_ids.len();
        let probs = vec![1.0 / n as f64; n];
        Self::new(anchor_ids, probs)
    }

    pub fn len(&self) -> usize {
        self.anchor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_ids.is_empty()
    }

    pub fn anchor_ids(&self) -> &[String] {
        &self.anchor_ids
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, anchor_id: &str) -> Option<f64> {
        self.anchor_ids
            .iter()
            .position(|a| a == anchor_id)
            .map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.anchor_ids
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    /// Error unless `other` is over the identical ordered anchor set.
    pub fn check_same_anchors(&self, other: &Distribution) -> Result<()> {
        if self.anchor_ids != other.anchor_ids {
            return Err(Error::AnchorSetMismatch {
                detail: format!("{:?} vs {:?}", self.anchor_ids, other.anchor_ids),
            });
        }
        Ok(())
    }

    /// Restrict to a subset of anchors (kept in this distribution's order)
    /// and renormalize over the surviving mass.
    pub fn restrict(&self, keep: &[String]) -> Result<Distribution> {
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        for (id, p) in self.anchor_ids.iter().zip(&self.probs) {
            if keep.contains(id) {
                ids.push(id.clone());
                weights.push(*p);
            }
        }
        if ids.len() != keep.len() {
            return Err(Error::AnchorSetMismatch {
                detail: format!("restriction set {keep:?} not contained in {:?}", self.anchor_ids),
            });
        }
        Distribution::from_weights(ids, weights)
    }
}
