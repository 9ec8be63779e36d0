//! Input generation for the operator benchmarks.
//!
//! Kept out of the bench file so the measurement protocol itself is
//! unit-testable: standard-normal scores, a uniformly drawn K-subset of
//! positive labels, and a fresh pair per draw from one seeded stream.
//! This mirrors what `dftopk bench` times; the criterion harness exists
//! for interactive profiling, the CLI for the reproducible CSV runs.

use dftopk_core::{LabelVector, ScoreVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub struct InputStream {
    rng: ChaCha20Rng,
    n: usize,
    k: usize,
}

impl InputStream {
    /// One deterministic stream per (seed, n, k); the shape is fixed so
    /// consecutive draws differ only in sampled values.
    pub fn new(seed: u64, n: usize, k: usize) -> Self {
        assert!(n >= 2, "need at least two items");
        assert!(k >= 1 && k < n, "k must lie in [1, n-1]");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        Self { rng, n, k }
    }

    pub fn draw(&mut self) -> (ScoreVector, LabelVector) {
        let scores: Vec<f64> = (0..self.n)
            .map(|_| self.rng.sample(StandardNormal))
            .collect();
        let mut labels = vec![0u8; self.n];
        for i in index::sample(&mut self.rng, self.n, self.k) {
            labels[i] = 1;
        }
        (
            ScoreVector::new(scores).expect("normal draws are finite"),
            LabelVector::new(labels).expect("labels are binary"),
        )
    }
}
