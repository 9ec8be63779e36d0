//! Validated domain types shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Per-item model scores for one candidate list. Guaranteed finite and of
/// length >= 2 after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewScores(values.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteScore { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ScoreVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Binary relevance labels. Stored as 0/1 bytes; operations that need
/// positives (recall, conflict metric) check their own minimum count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LabelVector(Vec<u8>);

impl LabelVector {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(index) = labels.iter().position(|&l| l > 1) {
            return Err(Error::InvalidLabel(index));
        }
        Ok(Self(labels))
    }

    /// Number of positive labels.
    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&l| l == 1).count()
    }

    /// Indices of the positive labels, ascending.
    pub fn positive_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == 1).then_some(i))
            .collect()
    }
}

impl std::ops::Deref for LabelVector {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for LabelVector {
    type Error = Error;

    fn try_from(labels: Vec<u8>) -> Result<Self> {
        LabelVector::new(labels)
    }
}

impl From<LabelVector> for Vec<u8> {
    fn from(labels: LabelVector) -> Vec<u8> {
        labels.0
    }
}

/// Selection size and temperature for the relaxed Top-K operator.
///
/// `k` is validated against a concrete vector length at the call site:
/// the operator needs both the k-th and (k+1)-th largest scores, so
/// `1 <= k <= N-1` (k = 0 and k = N are rejected).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKConfig {
    k: usize,
    tau: f64,
}

impl TopKConfig {
    pub fn new(k: usize, tau: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::KOutOfRange { k, n: 0 });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidTau(tau));
        }
        Ok(Self { k, tau })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.k >= n {
            return Err(Error::KOutOfRange { k: self.k, n });
        }
        Ok(())
    }
}

/// Relaxed Top-K mask: per-item membership probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Vec<f64>);

impl SoftMask {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::NonFiniteScore { index, value });
            }
        }
        Ok(Self(probs))
    }

    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Deref for SoftMask {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Hard Top-K indicator: exactly k ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardMask(Vec<u8>);

impl HardMask {
    pub(crate) fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self(bits)
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl std::ops::Deref for HardMask {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// The k-th and (k+1)-th largest scores with their item indices, as returned
/// by `select_rank_pair`. The decision boundary of the relaxed operator is
/// the midpoint of the two values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPair {
    pub kth_value: f64,
    pub kplus1_value: f64,
    pub kth_index: usize,
    pub kplus1_index: usize,
}

impl RankPair {
    /// Decision boundary theta = (x_[k] + x_[k+1]) / 2, computed as the sum
    /// of halves so huge scores cannot overflow.
    pub fn theta(&self) -> f64 {
        0.5 * self.kth_value + 0.5 * self.kplus1_value
    }

    /// Half the boundary gap, (x_[k] - x_[k+1]) / 2, >= 0. Computed by
    /// halving the rounded difference: the shifted-score path relies on this
    /// exact form to land the two boundary entries on +-half_gap bitwise.
    pub fn half_gap(&self) -> f64 {
        0.5 * (self.kth_value - self.kplus1_value)
    }
}
