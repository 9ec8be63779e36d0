//! Differentiable fast Top-K.
//!
//! The centrepiece is a relaxed Top-K membership operator built on
//! linear-time rank selection: pick the k-th and (k+1)-th largest scores,
//! threshold at their midpoint, and pass the shifted scores through a
//! temperature-scaled sigmoid. Within a fixed rank ordering the operator is
//! smooth, its Jacobian has closed form (identity plus two rank-one
//! boundary corrections), and both the forward and backward passes cost
//! O(N) average time — no sort, no O(N^2) relaxation matrix.
//!
//! Around the operator the crate provides:
//!
//! * [`operator`] — forward mask, mean-BCE loss, analytic backward, a
//!   general VJP, and a strict sum-to-k bisection reference.
//! * [`baselines`] — NeuralSort and SoftSort relaxations with their
//!   listwise Top-K losses and gradients, for comparison.
//! * [`metrics`] — hard recall@k@m and two-stage (retrieval then ranking)
//!   joint recall.
//! * [`gradcheck`] — a seeded finite-difference property suite over all
//!   differentiable routines.
//! * [`cascade`] — a synthetic drifting two-stage recommender: data
//!   generator, flat-parameter two-tower + ranker model, and a trainer
//!   that optimises either stage-coupled relaxed Top-K losses or a
//!   pointwise baseline.

pub mod baselines;
pub mod cascade;
mod error;
pub mod gradcheck;
mod math;
pub mod metrics;
pub mod operator;
pub mod select;
mod types;

pub use error::Error;
pub use types::{HardMask, LabelVector, RankPair, ScoreVector, SoftMask, TopKConfig};

pub type Result<T> = std::result::Result<T, Error>;
