//! Sorting-relaxation baselines.
//!
//! Both baselines relax the full argsort into a row-stochastic N x N matrix
//! whose row i approximates a one-hot indicator of the item at rank i:
//!
//! * NeuralSort: row i = softmax(((N + 1 - 2i) x - c) / tau), where
//!   c_j = sum_l |x_j - x_l| is the pairwise absolute-difference column sum.
//! * SoftSort: row i = softmax(-|sorted(x)_i - x| / tau), with sorted(x)
//!   the descending sort.
//!
//! Top-K training reads only the first K rows: the expected number of
//! positive items in the relaxed top K is sum_{i <= K} sum_j y_j P_{ij},
//! and the listwise loss is its negation. Forward and backward are
//! Theta(N^2) time and memory — this is the cost the rank-pair operator
//! in [`crate::operator`] avoids.

use std::fmt;
use std::str::FromStr;

use crate::math::softmax_in_place;
use crate::select::rank_cmp;
use crate::types::{LabelVector, ScoreVector};
use crate::{Error, Result};

/// Row-stochastic relaxation of a permutation matrix. Entry (i, j) is the
/// relaxed probability that item j occupies rank i (ranks count from the
/// largest score down).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPermutation {
    n: usize,
    rows: Vec<f64>,
}

impl SoftPermutation {
    /// Validates shape, entry range, and row-stochasticity (sums within
    /// 1e-6 of 1).
    pub fn new(n: usize, rows: Vec<f64>) -> Result<Self> {
        if n < 2 || rows.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: rows.len(),
            });
        }
        for (idx, &v) in rows.iter().enumerate() {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::NonFiniteScore {
                    index: idx,
                    value: v,
                });
            }
        }
        for i in 0..n {
            let sum: f64 = rows[i * n..(i + 1) * n].iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::NonFiniteScore {
                    index: i,
                    value: sum,
                });
            }
        }
        Ok(Self { n, rows })
    }

    fn from_softmax_rows(n: usize, rows: Vec<f64>) -> Self {
        debug_assert_eq!(rows.len(), n * n);
        Self { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.n + j]
    }
}

/// Which sorting relaxation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationKind {
    NeuralSort,
    SoftSort,
}

impl FromStr for PermutationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neuralsort" => Ok(Self::NeuralSort),
            "softsort" => Ok(Self::SoftSort),
            other => Err(Error::config(
                "kind",
                format!("unknown permutation kind {other:?}; expected neuralsort or softsort"),
            )),
        }
    }
}

impl fmt::Display for PermutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NeuralSort => "neuralsort",
            Self::SoftSort => "softsort",
        })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidTau(tau));
    }
    Ok(())
}

/// Sign with sgn(0) = 0 — the subgradient convention for |.| at its kink.
/// (`f64::signum` returns 1 at +0.0, which would silently bias tie
/// handling in the gradients below.)
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// NeuralSort relaxation. Theta(N^2) time and memory.
pub fn neuralsort_forward(x: &ScoreVector, tau: f64) -> Result<SoftPermutation> {
    check_tau(tau)?;
    let n = x.len();
    let c: Vec<f64> = x
        .iter()
        .map(|&xj| x.iter().map(|&xl| (xj - xl).abs()).sum())
        .collect();
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        // 1-based rank coefficient N + 1 - 2i.
        let a = (n as f64) - 1.0 - 2.0 * i as f64;
        let row = &mut rows[i * n..(i + 1) * n];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = (a * x[j] - c[j]) / tau;
        }
        softmax_in_place(row);
    }
    Ok(SoftPermutation::from_softmax_rows(n, rows))
}

/// Scores paired with their original indices, in rank order.
fn sorted_pairs(x: &[f64]) -> Vec<(f64, usize)> {
    let mut pairs: Vec<(f64, usize)> = x.iter().copied().zip(0..).collect();
    pairs.sort_by(rank_cmp);
    pairs
}

/// SoftSort relaxation. One full sort plus a Theta(N^2) matrix.
pub fn softsort_forward(x: &ScoreVector, tau: f64) -> Result<SoftPermutation> {
    check_tau(tau)?;
    let n = x.len();
    let sorted = sorted_pairs(x);
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        let vi = sorted[i].0;
        let row = &mut rows[i * n..(i + 1) * n];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = -(vi - x[j]).abs() / tau;
        }
        softmax_in_place(row);
    }
    Ok(SoftPermutation::from_softmax_rows(n, rows))
}

fn check_topk_count(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::TopKCountOutOfRange { k, n });
    }
    Ok(())
}

/// Expected number of positive items within the relaxed top K:
/// sum_{i < K} sum_j y_j P_{ij}. Linear in the matrix entries, so its
/// gradient with respect to P is just the label pattern on the first K rows.
pub fn expected_topk(p: &SoftPermutation, y: &LabelVector, k: usize) -> Result<f64> {
    if y.len() != p.n() {
        return Err(Error::LengthMismatch {
            expected: p.n(),
            actual: y.len(),
        });
    }
    check_topk_count(k, p.n())?;
    let mut total = 0.0;
    for i in 0..k {
        total += p
            .row(i)
            .iter()
            .zip(y.iter())
            .map(|(&pij, &yj)| f64::from(yj) * pij)
            .sum::<f64>();
    }
    Ok(total)
}

fn forward_by_kind(x: &ScoreVector, tau: f64, kind: PermutationKind) -> Result<SoftPermutation> {
    match kind {
        PermutationKind::NeuralSort => neuralsort_forward(x, tau),
        PermutationKind::SoftSort => softsort_forward(x, tau),
    }
}

/// Listwise Top-K loss: the negated expected positive count in the relaxed
/// top K. Minimising it pushes positive items into the first K rank rows.
pub fn permutation_loss(
    x: &ScoreVector,
    y: &LabelVector,
    k: usize,
    tau: f64,
    kind: PermutationKind,
) -> Result<f64> {
    let p = forward_by_kind(x, tau, kind)?;
    Ok(-expected_topk(&p, y, k)?)
}

/// dL/d logits for the listwise loss, rows 0..k only (rows past k get no
/// upstream signal). Softmax backward per row: M_ij = P_ij (dot_i - y_j)
/// with dot_i = sum_m y_m P_im.
fn loss_logit_grad(p: &SoftPermutation, y: &LabelVector, k: usize) -> Vec<f64> {
    let n = p.n();
    let mut m = vec![0.0; k * n];
    for i in 0..k {
        let row = p.row(i);
        let dot: f64 = row
            .iter()
            .zip(y.iter())
            .map(|(&pij, &yj)| f64::from(yj) * pij)
            .sum();
        for j in 0..n {
            m[i * n + j] = row[j] * (dot - f64::from(y[j]));
        }
    }
    m
}

/// Analytic gradient of `permutation_loss` with respect to the scores.
/// Theta(N^2) for both kinds; the absolute-value terms use the sgn(0) = 0
/// subgradient, so the result is exact away from score ties.
pub fn permutation_loss_backward(
    x: &ScoreVector,
    y: &LabelVector,
    k: usize,
    tau: f64,
    kind: PermutationKind,
) -> Result<Vec<f64>> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_topk_count(k, x.len())?;
    let n = x.len();
    let p = forward_by_kind(x, tau, kind)?;
    let m = loss_logit_grad(&p, y, k);
    let mut grad = vec![0.0; n];
    match kind {
        PermutationKind::NeuralSort => {
            // logit_ij = (a_i x_j - c_j) / tau, c_j = sum_l |x_j - x_l|.
            // d logit_ij / d x_q = (a_i [j = q] - dc_j/dx_q) / tau, with
            // dc_j/dx_q = -sgn(x_j - x_q) for j != q and
            // dc_q/dx_q = sum_l sgn(x_q - x_l).
            let colsum: Vec<f64> = (0..n).map(|j| (0..k).map(|i| m[i * n + j]).sum()).collect();
            for q in 0..n {
                let acoef: f64 = (0..k)
                    .map(|i| ((n as f64) - 1.0 - 2.0 * i as f64) * m[i * n + q])
                    .sum();
                let mut coupling = 0.0;
                let mut diag = 0.0;
                for l in 0..n {
                    let s = sgn(x[q] - x[l]);
                    diag += s;
                    coupling += colsum[l] * s;
                }
                coupling += colsum[q] * diag;
                grad[q] = (acoef - coupling) / tau;
            }
        }
        PermutationKind::SoftSort => {
            // logit_ij = -|v_i - x_j| / tau with v_i = x at rank i; a probe
            // of x_q moves both its own column and the single row whose
            // sorted value it is.
            let sorted = sorted_pairs(x);
            let mut rank_of = vec![0usize; n];
            for (i, &(_, idx)) in sorted.iter().enumerate() {
                rank_of[idx] = i;
            }
            for q in 0..n {
                let mut total = 0.0;
                for i in 0..k {
                    total += m[i * n + q] * sgn(sorted[i].0 - x[q]);
                }
                let r = rank_of[q];
                if r < k {
                    for j in 0..n {
                        total -= m[r * n + j] * sgn(sorted[r].0 - x[j]);
                    }
                }
                grad[q] = total / tau;
            }
        }
    }
    Ok(grad)
}

/// Gradient-conflict measurement on the NeuralSort relaxation.
///
/// For each rank row i <= K and each ordered pair of distinct positive
/// items (j, j'), the softmax normalisation couples their entries: raising
/// x_j' can lower P_ij even though both items are wanted in the top K. The
/// metric is the fraction of such ordered pairs with dP_ij / dx_j' < 0,
/// averaged over the first K rows. The analogous cross-derivative for the
/// rank-pair sigmoid operator is identically zero away from the boundary
/// indices, which is the contrast this number is meant to expose. Reported
/// descriptively; never trained on.
pub fn conflict_metric(x: &ScoreVector, y: &LabelVector, k: usize, tau: f64) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_topk_count(k, x.len())?;
    let positives = y.positive_indices();
    if positives.len() < 2 {
        return Err(Error::TooFewPositives {
            required: 2,
            actual: positives.len(),
        });
    }
    let n = x.len();
    let p = neuralsort_forward(x, tau)?;
    let mut negative = 0usize;
    let mut pairs = 0usize;
    for i in 0..k {
        let a = (n as f64) - 1.0 - 2.0 * i as f64;
        let row = p.row(i);
        for &jp in &positives {
            // d logit_im / d x_jp, scaled by tau (positive, sign-neutral).
            let diag: f64 = x.iter().map(|&xl| sgn(x[jp] - xl)).sum();
            let d_logit = |m: usize| -> f64 {
                if m == jp {
                    a - diag
                } else {
                    sgn(x[m] - x[jp])
                }
            };
            let avg: f64 = (0..n).map(|m| row[m] * d_logit(m)).sum();
            for &j in &positives {
                if j == jp {
                    continue;
                }
                pairs += 1;
                if row[j] * (d_logit(j) - avg) < 0.0 {
                    negative += 1;
                }
            }
        }
    }
    Ok(negative as f64 / pairs as f64)
}
