//! Hard retrieval metrics: Recall@k@m for a single stage and joint recall
//! for a two-stage cascade (retrieval quota feeding a ranking quota).
//!
//! All selections use the library-wide tie rule — higher score first, lower
//! original index on equal scores — so every metric is deterministic.

use crate::select::top_m_indices;
use crate::types::{LabelVector, ScoreVector};
use crate::{Error, Result};

/// A recall measurement: `hits` of `possible` positives retrieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallResult {
    pub hits: usize,
    pub possible: usize,
    pub recall: f64,
}

impl RecallResult {
    fn new(hits: usize, possible: usize) -> Self {
        Self {
            hits,
            possible,
            recall: hits as f64 / possible as f64,
        }
    }
}

fn check_common(scores: &ScoreVector, y: &LabelVector, m: usize) -> Result<usize> {
    if y.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: y.len(),
        });
    }
    if m == 0 || m > scores.len() {
        return Err(Error::MOutOfRange { m, n: scores.len() });
    }
    let possible = y.positives();
    if possible == 0 {
        return Err(Error::TooFewPositives {
            required: 1,
            actual: 0,
        });
    }
    Ok(possible)
}

fn count_hits(kept: &[usize], y: &LabelVector) -> usize {
    kept.iter().filter(|&&i| y[i] == 1).count()
}

/// Fraction of the positive items that survive a hard top-m cut of the
/// scores. The denominator is always the total positive count, so the
/// value is comparable across different m.
pub fn recall_at_k_at_m(scores: &ScoreVector, y: &LabelVector, m: usize) -> Result<RecallResult> {
    let possible = check_common(scores, y, m)?;
    let kept = top_m_indices(scores, m);
    Ok(RecallResult::new(count_hits(&kept, y), possible))
}

/// Recall through a two-stage cascade: the retrieval scores keep
/// m_retrieval items, then the ranking scores keep m_ranking of the
/// survivors. A positive counts only if it clears both cuts — losing it at
/// either stage loses it for good, which is what couples the stages.
pub fn joint_recall(
    retrieval: &ScoreVector,
    ranking: &ScoreVector,
    y: &LabelVector,
    m_retrieval: usize,
    m_ranking: usize,
) -> Result<RecallResult> {
    if ranking.len() != retrieval.len() {
        return Err(Error::LengthMismatch {
            expected: retrieval.len(),
            actual: ranking.len(),
        });
    }
    if m_ranking > m_retrieval {
        return Err(Error::QuotaOrder {
            m_ranking,
            m_retrieval,
        });
    }
    if m_ranking == 0 {
        return Err(Error::MOutOfRange {
            m: m_ranking,
            n: retrieval.len(),
        });
    }
    let possible = check_common(retrieval, y, m_retrieval)?;
    let survivors = top_m_indices(retrieval, m_retrieval);
    // Re-rank the survivors by ranking score, ties again to lower index.
    let mut pairs: Vec<(f64, usize)> = survivors.iter().map(|&i| (ranking[i], i)).collect();
    pairs.sort_by(crate::select::rank_cmp);
    pairs.truncate(m_ranking);
    let kept: Vec<usize> = pairs.into_iter().map(|(_, i)| i).collect();
    Ok(RecallResult::new(count_hits(&kept, y), possible))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec()).unwrap()
    }

    fn lv(v: &[u8]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    /// Full-sort oracle for a top-m cut with the same tie rule.
    fn oracle_top_m(scores: &[f64], candidates: &[usize], m: usize) -> Vec<usize> {
        let mut c = candidates.to_vec();
        c.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
        c.truncate(m);
        c
    }

    #[test]
    fn worked_example() {
        let r = recall_at_k_at_m(&sv(&[4.0, 1.0, 3.0, 2.0]), &lv(&[1, 0, 1, 0]), 2).unwrap();
        assert_eq!((r.hits, r.possible), (2, 2));
        assert_eq!(r.recall, 1.0);
    }

    #[test]
    fn full_quota_always_recalls_everything() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..50);
            let scores = sv(&(0..n)
                .map(|_| rng.gen_range(-10.0..10.0))
                .collect::<Vec<_>>());
            let mut labels = vec![0u8; n];
            let pos = rng.gen_range(1..=n);
            for l in labels.iter_mut().take(pos) {
                *l = 1;
            }
            let r = recall_at_k_at_m(&scores, &lv(&labels), n).unwrap();
            assert_eq!(r.recall, 1.0);
        }
    }

    #[test]
    fn bottom_ranked_positives_score_zero() {
        // Positives hold the two smallest scores; m = 2 keeps only the top
        // two, so no positive survives.
        let r = recall_at_k_at_m(&sv(&[9.0, 8.0, 1.0, 0.5]), &lv(&[0, 0, 1, 1]), 2).unwrap();
        assert_eq!(r.hits, 0);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn validation_errors() {
        let x = sv(&[4.0, 1.0, 3.0, 2.0]);
        assert!(matches!(
            recall_at_k_at_m(&x, &lv(&[0, 0, 0, 0]), 2),
            Err(Error::TooFewPositives { .. })
        ));
        assert!(matches!(
            recall_at_k_at_m(&x, &lv(&[1, 0, 1, 0]), 0),
            Err(Error::MOutOfRange { .. })
        ));
        assert!(matches!(
            recall_at_k_at_m(&x, &lv(&[1, 0, 1, 0]), 5),
            Err(Error::MOutOfRange { .. })
        ));
        assert!(matches!(
            recall_at_k_at_m(&x, &lv(&[1, 0]), 2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            joint_recall(&x, &x, &lv(&[1, 0, 1, 0]), 2, 3),
            Err(Error::QuotaOrder { .. })
        ));
    }

    #[test]
    fn degenerate_cascade_reduces_to_single_stage() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(3..40);
            let scores = sv(&(0..n).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<_>>());
            let labels: Vec<u8> = loop {
                let l: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
                if l.contains(&1) {
                    break l;
                }
            };
            let y = lv(&labels);
            let m_rank = rng.gen_range(1..=n);
            let m_retr = rng.gen_range(m_rank..=n);
            let joint = joint_recall(&scores, &scores, &y, m_retr, m_rank).unwrap();
            let single = recall_at_k_at_m(&scores, &y, m_rank).unwrap();
            assert_eq!(joint, single);
        }
    }

    #[test]
    fn retrieval_that_drops_every_positive_yields_zero() {
        // Retrieval scores rank positives last; ranking scores would love
        // them, but they never reach stage two.
        let retrieval = sv(&[9.0, 8.0, 7.0, 1.0, 0.5]);
        let ranking = sv(&[0.0, 0.0, 0.0, 99.0, 98.0]);
        let y = lv(&[0, 0, 0, 1, 1]);
        let r = joint_recall(&retrieval, &ranking, &y, 3, 2).unwrap();
        assert_eq!(r.hits, 0);
    }

    #[test]
    fn matches_brute_force_two_stage_simulation() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        for trial in 0..200 {
            let n = 20;
            // Quantized scores in half the trials to force ties through
            // both stages.
            let quantize = trial % 2 == 0;
            let gen_scores = |rng: &mut ChaCha20Rng| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        let v: f64 = rng.gen_range(-5.0..5.0);
                        if quantize {
                            v.round()
                        } else {
                            v
                        }
                    })
                    .collect()
            };
            let retrieval = gen_scores(&mut rng);
            let ranking = gen_scores(&mut rng);
            let labels: Vec<u8> = loop {
                let l: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.25))).collect();
                if l.contains(&1) {
                    break l;
                }
            };
            let y = lv(&labels);
            let m_rank = rng.gen_range(1..=n);
            let m_retr = rng.gen_range(m_rank..=n);

            let got = joint_recall(&sv(&retrieval), &sv(&ranking), &y, m_retr, m_rank).unwrap();

            let all: Vec<usize> = (0..n).collect();
            let survivors = oracle_top_m(&retrieval, &all, m_retr);
            let kept = oracle_top_m(&ranking, &survivors, m_rank);
            let hits = kept.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(got.hits, hits, "trial {trial}");
            assert_eq!(got.possible, y.positives());
        }
    }

    proptest! {
        #[test]
        fn joint_never_exceeds_retrieval_recall(
            values in proptest::collection::vec(-10.0f64..10.0, 3..30),
            rank_values in proptest::collection::vec(-10.0f64..10.0, 30),
            label_bits in proptest::collection::vec(proptest::bool::ANY, 30),
            seeds in (0usize..1000, 0usize..1000),
        ) {
            let n = values.len();
            let labels: Vec<u8> = label_bits[..n].iter().map(|&b| u8::from(b)).collect();
            prop_assume!(labels.contains(&1));
            let y = lv(&labels);
            let retrieval = sv(&values);
            let ranking = sv(&rank_values[..n]);
            let m_rank = 1 + seeds.0 % n;
            let m_retr = m_rank + seeds.1 % (n - m_rank + 1);
            let joint = joint_recall(&retrieval, &ranking, &y, m_retr, m_rank).unwrap();
            let stage1 = recall_at_k_at_m(&retrieval, &y, m_retr).unwrap();
            prop_assert!(joint.recall <= stage1.recall + 1e-15);
        }

        #[test]
        fn recall_is_monotone_in_m(
            values in proptest::collection::vec(-10.0f64..10.0, 2..25),
            label_bits in proptest::collection::vec(proptest::bool::ANY, 25),
        ) {
            let n = values.len();
            let labels: Vec<u8> = label_bits[..n].iter().map(|&b| u8::from(b)).collect();
            prop_assume!(labels.contains(&1));
            let scores = sv(&values);
            let y = lv(&labels);
            let mut prev = 0.0;
            for m in 1..=n {
                let r = recall_at_k_at_m(&scores, &y, m).unwrap().recall;
                prop_assert!(r >= prev);
                prev = r;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn permuting_items_leaves_recalls_unchanged(
            values in proptest::collection::vec(-10.0f64..10.0, 3..20),
            rank_values in proptest::collection::vec(-10.0f64..10.0, 20),
            label_bits in proptest::collection::vec(proptest::bool::ANY, 20),
            perm_seed in 0u64..10_000,
        ) {
            let n = values.len();
            let labels: Vec<u8> = label_bits[..n].iter().map(|&b| u8::from(b)).collect();
            prop_assume!(labels.contains(&1));
            // Distinct scores only: with ties, the index tie-break makes
            // selection legitimately permutation-sensitive.
            let mut s = values.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(s.windows(2).all(|w| w[1] - w[0] > 1e-9));
            let mut r = rank_values[..n].to_vec();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(r.windows(2).all(|w| w[1] - w[0] > 1e-9));

            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha20Rng::seed_from_u64(perm_seed);
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let apply = |src: &[f64]| -> Vec<f64> {
                perm.iter().map(|&i| src[i]).collect()
            };
            let perm_labels: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();

            let m_rank = 1 + (perm_seed as usize) % n;
            let m_retr = m_rank + (perm_seed as usize / 7) % (n - m_rank + 1);

            let base = joint_recall(
                &sv(&values), &sv(&rank_values[..n]), &lv(&labels), m_retr, m_rank,
            ).unwrap();
            let shuffled = joint_recall(
                &sv(&apply(&values)), &sv(&apply(&rank_values[..n])),
                &lv(&perm_labels), m_retr, m_rank,
            ).unwrap();
            prop_assert_eq!(base.hits, shuffled.hits);
            prop_assert_eq!(base.possible, shuffled.possible);
        }
    }
}
