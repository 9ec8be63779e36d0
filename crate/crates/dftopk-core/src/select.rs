//! Rank-pair and hard Top-K selection.
//!
//! Selection runs on (value, index) pairs under a single library-wide rank
//! order: higher value first, ties won by the lower index. The heavy lifting
//! is `slice::select_nth_unstable_by` — an introselect (quickselect with a
//! deterministic fallback), so average cost is O(N), worst case O(N log N)
//! territory without ever doing a full sort.

use std::cmp::Ordering;

use crate::error::Error;
use crate::types::{HardMask, RankPair, ScoreVector};
use crate::Result;

/// Total rank order on (value, index) pairs: `Less` means "ranked higher".
#[inline]
pub(crate) fn rank_cmp(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    match b.0.partial_cmp(&a.0) {
        Some(Ordering::Equal) | None => a.1.cmp(&b.1),
        Some(ord) => ord,
    }
}

fn validate_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(())
}

fn indexed(x: &[f64]) -> Vec<(f64, usize)> {
    x.iter().copied().zip(0..).collect()
}

/// The k-th and (k+1)-th largest scores with their indices (1-based ranks).
///
/// Ties are broken deterministically: of two equal values, the lower index
/// takes the higher rank, so `[5,5,5]` with k=1 yields indices (0, 1).
pub fn select_rank_pair(x: &ScoreVector, k: usize) -> Result<RankPair> {
    let n = x.len();
    validate_k(k, n)?;
    let mut pairs = indexed(x);
    let (_, &mut (kth_value, kth_index), rest) = pairs.select_nth_unstable_by(k - 1, rank_cmp);
    let &(kplus1_value, kplus1_index) = rest
        .iter()
        .min_by(|a, b| rank_cmp(a, b))
        .expect("k <= n-1 leaves a non-empty tail");
    Ok(RankPair {
        kth_value,
        kplus1_value,
        kth_index,
        kplus1_index,
    })
}

/// Indicator of the k largest scores, same tie-break as `select_rank_pair`.
pub fn hard_topk(x: &ScoreVector, k: usize) -> Result<HardMask> {
    let n = x.len();
    validate_k(k, n)?;
    let mut pairs = indexed(x);
    pairs.select_nth_unstable_by(k - 1, rank_cmp);
    let mut bits = vec![0u8; n];
    for &(_, i) in &pairs[..k] {
        bits[i] = 1;
    }
    Ok(HardMask::from_bits(bits))
}

/// Indices of the top-m scores in rank order; `m` may equal the length
/// (metrics use the full range of quotas, unlike the k of the operator).
pub(crate) fn top_m_indices(scores: &[f64], m: usize) -> Vec<usize> {
    debug_assert!(m >= 1 && m <= scores.len());
    let mut pairs = indexed(scores);
    if m < pairs.len() {
        pairs.select_nth_unstable_by(m - 1, rank_cmp);
        pairs.truncate(m);
    }
    pairs.sort_unstable_by(rank_cmp);
    pairs.into_iter().map(|(_, i)| i).collect()
}
