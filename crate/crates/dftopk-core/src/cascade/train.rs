//! Streaming trainer for the two-stage simulation.
//!
//! Each training step sums one listwise loss per stage — retrieval scores
//! against the labels with top-`k_retrieval`, ranking scores with
//! top-`k_ranking` — and pushes the combined score gradients through the
//! model's backward pass into Adam. The stages share labels but not
//! parameters, so their losses simply add.
//!
//! `streaming_evaluate` replays the day-by-day protocol: evaluate day t
//! with the model trained on days 0..t (one epoch each, carrying optimizer
//! state forward), so every day is scored by a model that has never seen
//! it and drift costs exactly what the model failed to track.

use std::fmt;
use std::str::FromStr;

use super::data::{Generator, PVRecord};
use super::model::{CascadeModel, Dims};
use crate::baselines::{permutation_loss, permutation_loss_backward, PermutationKind};
use crate::math::{sigmoid, softplus};
use crate::metrics::{joint_recall, recall_at_k_at_m};
use crate::operator::{dftopk_forward, dftopk_loss, dftopk_loss_backward, sum_deviation};
use crate::{Error, LabelVector, Result, ScoreVector, TopKConfig};

/// Which training loss drives both stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Dftopk,
    NeuralSort,
    SoftSort,
    PointwiseBce,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Dftopk,
        LossKind::NeuralSort,
        LossKind::SoftSort,
        LossKind::PointwiseBce,
    ];
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dftopk" => Ok(LossKind::Dftopk),
            "neuralsort" => Ok(LossKind::NeuralSort),
            "softsort" => Ok(LossKind::SoftSort),
            "pointwise_bce" => Ok(LossKind::PointwiseBce),
            _ => Err(Error::config(
                "loss_kind",
                format!(
                    "unknown loss `{s}` (expected dftopk, neuralsort, softsort or pointwise_bce)"
                ),
            )),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Dftopk => "dftopk",
            LossKind::NeuralSort => "neuralsort",
            LossKind::SoftSort => "softsort",
            LossKind::PointwiseBce => "pointwise_bce",
        })
    }
}

/// Everything a run needs: data shape, model shape, loss and optimizer
/// settings. `validate` is called by every entry point that takes a config.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    /// Top-k size of the retrieval-stage training loss.
    pub k_retrieval: usize,
    /// Top-k size of the ranking-stage training loss.
    pub k_ranking: usize,
    /// Temperature of the relaxed top-k operator.
    pub tau: f64,
    /// Temperature of the permutation-relaxation baselines.
    pub baseline_tau: f64,
    pub learning_rate: f64,
    /// Page views per optimizer step.
    pub batch_pvs: usize,
    pub seed: u64,
    pub days: usize,
    pub pvs_per_day: usize,
    /// Organic candidates per page view.
    pub base_candidates: usize,
    /// Sampled negatives appended to each page view.
    pub n_neg: usize,
    /// Positives labeled per page view (highest relevance wins).
    pub k_pos: usize,
    /// Retrieval-stage cutoff used by evaluation.
    pub m_retrieval: usize,
    /// Ranking-stage cutoff used by evaluation.
    pub m_ranking: usize,
    pub user_dim: usize,
    pub item_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Latent dimension of the data generator's bilinear relevance model.
    pub latent_dim: usize,
    /// Observation noise added to relevance before labeling; 0 makes the
    /// labels exactly recoverable from the features.
    pub noise: f64,
    /// Radians of user-taste rotation per day.
    pub drift: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Dftopk,
            k_retrieval: 10,
            k_ranking: 10,
            tau: 1.0,
            baseline_tau: 1.0,
            learning_rate: 0.01,
            batch_pvs: 64,
            seed: 0,
            days: 15,
            pvs_per_day: 2048,
            base_candidates: 40,
            n_neg: 160,
            k_pos: 10,
            m_retrieval: 30,
            m_ranking: 20,
            user_dim: 16,
            item_dim: 16,
            hidden_dim: 32,
            embed_dim: 8,
            latent_dim: 4,
            noise: 0.1,
            drift: 0.05,
        }
    }
}

impl TrainConfig {
    /// Candidates per page view.
    pub fn n_items(&self) -> usize {
        self.base_candidates + self.n_neg
    }

    pub fn dims(&self) -> Dims {
        Dims {
            user_dim: self.user_dim,
            item_dim: self.item_dim,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
        }
    }

    /// Reduced-scale run used by temperature sweeps: short page views
    /// (no sampled negatives), half the list labeled positive, and small
    /// high-variance batches. The balanced `k = k_pos = n/2` keeps the
    /// operator's zero-sum boundary correction from swamping the per-item
    /// gradients at large `tau`, and the batch size of 8 leaves enough
    /// gradient variance that hard saturated regimes (tiny `tau`) pay
    /// their instability cost instead of being averaged back to health.
    /// One sweep point trains in seconds rather than minutes.
    pub fn reduced_sweep(tau: f64) -> Self {
        Self {
            tau,
            days: 32,
            pvs_per_day: 768,
            n_neg: 0,
            k_pos: 20,
            k_retrieval: 20,
            k_ranking: 20,
            m_ranking: 25,
            noise: 0.3,
            learning_rate: 0.05,
            batch_pvs: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_items();
        if n < 2 {
            return Err(Error::config(
                "base_candidates",
                format!("need at least 2 candidates per page view, got {n}"),
            ));
        }
        if self.k_pos == 0 || self.k_pos > n {
            return Err(Error::config(
                "k_pos",
                format!("need 1 <= k_pos <= {n}, got {}", self.k_pos),
            ));
        }
        if self.k_retrieval == 0 || self.k_retrieval >= n {
            return Err(Error::config(
                "k_retrieval",
                format!(
                    "relaxed top-k needs 1 <= k <= n-1 = {}, got {}",
                    n - 1,
                    self.k_retrieval
                ),
            ));
        }
        if self.k_ranking == 0 || self.k_ranking > self.k_retrieval {
            return Err(Error::config(
                "k_ranking",
                format!(
                    "need 1 <= k_ranking <= k_retrieval = {}, got {}",
                    self.k_retrieval, self.k_ranking
                ),
            ));
        }
        if self.m_retrieval == 0 || self.m_retrieval > n {
            return Err(Error::config(
                "m_retrieval",
                format!("need 1 <= m_retrieval <= {n}, got {}", self.m_retrieval),
            ));
        }
        if self.m_ranking == 0 || self.m_ranking > self.m_retrieval {
            return Err(Error::config(
                "m_ranking",
                format!(
                    "need 1 <= m_ranking <= m_retrieval = {}, got {}",
                    self.m_retrieval, self.m_ranking
                ),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config("tau", "must be positive and finite"));
        }
        if !(self.baseline_tau.is_finite() && self.baseline_tau > 0.0) {
            return Err(Error::config("baseline_tau", "must be positive and finite"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be finite and >= 0"));
        }
        if self.batch_pvs == 0 {
            return Err(Error::config("batch_pvs", "must be at least 1"));
        }
        if self.days == 0 {
            return Err(Error::config("days", "must be at least 1"));
        }
        if self.pvs_per_day == 0 {
            return Err(Error::config("pvs_per_day", "must be at least 1"));
        }
        for (key, v) in [
            ("user_dim", self.user_dim),
            ("item_dim", self.item_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config("noise", "must be finite and >= 0"));
        }
        if !self.drift.is_finite() {
            return Err(Error::config("drift", "must be finite"));
        }
        Ok(())
    }
}

/// Losses of one optimizer step, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
    pub retrieval_loss: f64,
    pub ranking_loss: f64,
}

/// One evaluation row of the streaming protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct DayMetrics {
    pub day: usize,
    pub loss_kind: LossKind,
    pub joint_recall: f64,
    pub retrieval_recall: f64,
    pub ranking_recall: f64,
    /// Mean |sum(soft mask) - k| of the relaxed top-k operator on the
    /// retrieval scores — how far the relaxation is from selecting exactly
    /// k items, measured identically for every loss kind.
    pub sum_deviation: f64,
}

pub const DAY_METRICS_CSV_HEADER: &str =
    "day,loss_kind,joint_recall,retrieval_recall,ranking_recall,sum_deviation";

impl DayMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.day,
            self.loss_kind,
            self.joint_recall,
            self.retrieval_recall,
            self.ranking_recall,
            self.sum_deviation
        )
    }
}

/// Adam with bias correction; `lr = 0` leaves parameters bitwise unchanged
/// (moment estimates still advance).
struct Adam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Mean binary cross-entropy of `sigmoid(score)` against the labels, with
/// its score gradient. The pointwise baseline: every item is classified
/// independently, no notion of a top-k budget.
fn pointwise_bce(scores: &[f64], y: &LabelVector) -> (f64, Vec<f64>) {
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for (i, (&s, &label)) in scores.iter().zip(y.iter()).enumerate() {
        let yf = f64::from(label);
        loss += softplus(s) - yf * s;
        grad[i] = (sigmoid(s) - yf) / n;
    }
    (loss / n, grad)
}

/// Loss and score-gradient of one stage under the configured loss kind.
fn stage_loss_grad(
    scores: &ScoreVector,
    y: &LabelVector,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    match cfg.loss_kind {
        LossKind::Dftopk => {
            let top = TopKConfig::new(k, cfg.tau)?;
            Ok((
                dftopk_loss(scores, y, &top)?,
                dftopk_loss_backward(scores, y, &top)?,
            ))
        }
        LossKind::NeuralSort => listwise(scores, y, k, cfg, PermutationKind::NeuralSort),
        LossKind::SoftSort => listwise(scores, y, k, cfg, PermutationKind::SoftSort),
        LossKind::PointwiseBce => Ok(pointwise_bce(scores, y)),
    }
}

fn listwise(
    scores: &ScoreVector,
    y: &LabelVector,
    k: usize,
    cfg: &TrainConfig,
    kind: PermutationKind,
) -> Result<(f64, Vec<f64>)> {
    Ok((
        permutation_loss(scores, y, k, cfg.baseline_tau, kind)?,
        permutation_loss_backward(scores, y, k, cfg.baseline_tau, kind)?,
    ))
}

/// Batch loss (mean over page views of the two-stage sum) and its gradient
/// with respect to every model parameter.
pub(crate) fn batch_loss_and_grad(
    model: &CascadeModel,
    batch: &[PVRecord],
    cfg: &TrainConfig,
) -> Result<(f64, f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.param_count()];
    let mut retrieval_loss = 0.0;
    let mut ranking_loss = 0.0;
    for pv in batch {
        let acts = model.forward_cached(pv)?;
        let retrieval = ScoreVector::new(acts.retrieval.clone())?;
        let ranking = ScoreVector::new(acts.ranking.clone())?;
        let (lr, gr) = stage_loss_grad(&retrieval, &pv.labels, cfg.k_retrieval, cfg)?;
        let (lk, gk) = stage_loss_grad(&ranking, &pv.labels, cfg.k_ranking, cfg)?;
        retrieval_loss += lr;
        ranking_loss += lk;
        model.backward(pv, &acts, &gr, &gk, &mut grad);
    }
    let scale = (batch.len() as f64).recip();
    for g in &mut grad {
        *g *= scale;
    }
    Ok((retrieval_loss * scale, ranking_loss * scale, grad))
}

/// Model + optimizer + config; owns all mutable training state.
pub struct Trainer {
    cfg: TrainConfig,
    model: CascadeModel,
    adam: Adam,
    step: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = CascadeModel::init(cfg.dims(), cfg.seed)?;
        let adam = Adam::new(cfg.learning_rate, model.param_count());
        Ok(Self {
            cfg,
            model,
            adam,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &CascadeModel {
        &self.model
    }

    pub fn into_model(self) -> CascadeModel {
        self.model
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One optimizer step on one batch. Aborts (with the step index)
    /// rather than update from a non-finite loss or gradient; a diverged
    /// model whose scores already overflow reports the same way.
    pub fn train_step(&mut self, batch: &[PVRecord]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::config("batch_pvs", "batch must not be empty"));
        }
        let (retrieval_loss, ranking_loss, grad) =
            batch_loss_and_grad(&self.model, batch, &self.cfg).map_err(|e| match e {
                Error::NonFiniteScore { .. } => Error::NonFiniteLoss { step: self.step },
                other => other,
            })?;
        let loss = retrieval_loss + ranking_loss;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        self.adam.step(&mut self.model.params, &grad);
        let stats = StepStats {
            step: self.step,
            loss,
            retrieval_loss,
            ranking_loss,
        };
        self.step += 1;
        Ok(stats)
    }

    /// One pass over `pvs` in order, in batches of `batch_pvs`.
    pub fn train_epoch(&mut self, pvs: &[PVRecord]) -> Result<Vec<StepStats>> {
        pvs.chunks(self.cfg.batch_pvs)
            .map(|batch| self.train_step(batch))
            .collect()
    }

    /// Average cascade metrics of the current model over `pvs`.
    pub fn evaluate(&self, day: usize, pvs: &[PVRecord]) -> Result<DayMetrics> {
        if pvs.is_empty() {
            return Err(Error::config("pvs_per_day", "nothing to evaluate"));
        }
        let top = TopKConfig::new(self.cfg.k_retrieval, self.cfg.tau)?;
        let mut joint = 0.0;
        let mut retrieval_recall = 0.0;
        let mut ranking_recall = 0.0;
        let mut deviation = 0.0;
        for pv in pvs {
            let (retrieval, ranking) = self.model.forward_scores(pv)?;
            joint += joint_recall(
                &retrieval,
                &ranking,
                &pv.labels,
                self.cfg.m_retrieval,
                self.cfg.m_ranking,
            )?
            .recall;
            retrieval_recall +=
                recall_at_k_at_m(&retrieval, &pv.labels, self.cfg.m_retrieval)?.recall;
            ranking_recall += recall_at_k_at_m(&ranking, &pv.labels, self.cfg.m_ranking)?.recall;
            let (mask, _) = dftopk_forward(&retrieval, &top)?;
            deviation += sum_deviation(&mask, self.cfg.k_retrieval);
        }
        let scale = (pvs.len() as f64).recip();
        Ok(DayMetrics {
            day,
            loss_kind: self.cfg.loss_kind,
            joint_recall: joint * scale,
            retrieval_recall: retrieval_recall * scale,
            ranking_recall: ranking_recall * scale,
            sum_deviation: deviation * scale,
        })
    }
}

/// Day-by-day protocol: for each day t >= 1, train one epoch on day t-1
/// (cumulative — optimizer state and model carry over) and evaluate on the
/// still-unseen day t. Returns one row per evaluated day.
pub fn streaming_evaluate(cfg: &TrainConfig) -> Result<Vec<DayMetrics>> {
    Ok(streaming_run(cfg)?.0)
}

/// [`streaming_evaluate`] plus the final trained model, for callers that
/// persist it.
pub fn streaming_run(cfg: &TrainConfig) -> Result<(Vec<DayMetrics>, CascadeModel)> {
    cfg.validate()?;
    if cfg.days < 2 {
        return Err(Error::config(
            "days",
            "streaming evaluation needs at least 2 days",
        ));
    }
    let generator = Generator::new(cfg)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut rows = Vec::with_capacity(cfg.days - 1);
    for day in 1..cfg.days {
        trainer.train_epoch(&generator.day(day - 1))?;
        rows.push(trainer.evaluate(day, &generator.day(day))?);
    }
    Ok((rows, trainer.into_model()))
}
