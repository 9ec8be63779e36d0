//! Synthetic page-view generator for the two-stage simulation.
//!
//! Each page view (PV) has one user and `base_candidates + n_neg` candidate
//! items. Relevance is bilinear in latent space: user and item feature
//! vectors are projected through fixed random maps and their inner product,
//! plus optional observation noise, scores the item. The `k_pos` highest
//! relevances become the positive labels, so with zero noise the labels are
//! exactly recoverable from the features by a linear-in-features scorer and
//! a perfect joint recall of 1.0 is achievable by construction.
//!
//! Interest drift: the projected user vector is rotated in the first two
//! latent coordinates by `day * drift` radians, so user taste moves slowly
//! from day to day while the item side stays put. A model trained up to
//! day t-1 therefore faces slightly stale geometry on day t.
//!
//! Every record is derived from `(seed, day, index)` alone; generation order
//! and thread layout cannot change the bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::gradcheck::{instance_rng, name_salt};
use crate::math::matvec;
use crate::select::top_m_indices;
use crate::{Error, LabelVector, Result, ScoreVector};

/// One page view: a user, its candidate items, and binary relevance labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVRecord {
    pub day: usize,
    pub user_features: Vec<f64>,
    #[serde(rename = "item_feature_rows")]
    pub item_features: Vec<Vec<f64>>,
    pub labels: LabelVector,
}

impl PVRecord {
    /// Number of candidate items.
    pub fn n_items(&self) -> usize {
        self.item_features.len()
    }
}

/// Deterministic latent-factor data source. The projection matrices are
/// fixed at construction from the seed; records depend only on
/// `(seed, day, index)`.
#[derive(Debug, Clone)]
pub struct Generator {
    user_proj: Vec<f64>, // latent_dim x user_dim, row-major
    item_proj: Vec<f64>, // latent_dim x item_dim, row-major
    latent_dim: usize,
    user_dim: usize,
    item_dim: usize,
    n_items: usize,
    k_pos: usize,
    noise: f64,
    drift: f64,
    pvs_per_day: usize,
    seed: u64,
}

impl Generator {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = instance_rng(cfg.seed, name_salt("cascade-latent"), 0);
        let scale_u = (cfg.user_dim as f64).sqrt().recip();
        let scale_i = (cfg.item_dim as f64).sqrt().recip();
        let user_proj = (0..cfg.latent_dim * cfg.user_dim)
            .map(|_| scale_u * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let item_proj = (0..cfg.latent_dim * cfg.item_dim)
            .map(|_| scale_i * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            user_proj,
            item_proj,
            latent_dim: cfg.latent_dim,
            user_dim: cfg.user_dim,
            item_dim: cfg.item_dim,
            n_items: cfg.n_items(),
            k_pos: cfg.k_pos,
            noise: cfg.noise,
            drift: cfg.drift,
            pvs_per_day: cfg.pvs_per_day,
            seed: cfg.seed,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn pvs_per_day(&self) -> usize {
        self.pvs_per_day
    }

    /// Generate the page view at `(day, index)`.
    pub fn page_view(&self, day: usize, index: usize) -> PVRecord {
        let stream = ((day as u64) << 32) | (index as u64 & 0xffff_ffff);
        let mut rng = instance_rng(self.seed, name_salt("cascade-pv"), stream);

        let user_features: Vec<f64> = (0..self.user_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let item_features: Vec<Vec<f64>> = (0..self.n_items)
            .map(|_| {
                (0..self.item_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();

        let mut relevance = self.relevance(day, &user_features, &item_features);
        if self.noise > 0.0 {
            for r in relevance.iter_mut() {
                *r += self.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }

        let mut labels = vec![0u8; self.n_items];
        for i in top_m_indices(&relevance, self.k_pos) {
            labels[i] = 1;
        }
        PVRecord {
            day,
            user_features,
            item_features,
            labels: LabelVector::new(labels).expect("labels are 0/1"),
        }
    }

    /// All page views for one day.
    pub fn day(&self, day: usize) -> Vec<PVRecord> {
        (0..self.pvs_per_day)
            .map(|i| self.page_view(day, i))
            .collect()
    }

    /// Noise-free relevance of a record's items, recomputed from its
    /// features. With `noise = 0` these scores sort every positive above
    /// every negative, which bounds what any trained model can achieve.
    pub fn oracle_scores(&self, pv: &PVRecord) -> Result<ScoreVector> {
        if pv.user_features.len() != self.user_dim {
            return Err(Error::LengthMismatch {
                expected: self.user_dim,
                actual: pv.user_features.len(),
            });
        }
        for row in &pv.item_features {
            if row.len() != self.item_dim {
                return Err(Error::LengthMismatch {
                    expected: self.item_dim,
                    actual: row.len(),
                });
            }
        }
        ScoreVector::new(self.relevance(pv.day, &pv.user_features, &pv.item_features))
    }

    fn relevance(&self, day: usize, user: &[f64], items: &[Vec<f64>]) -> Vec<f64> {
        let mut taste = vec![0.0; self.latent_dim];
        matvec(&self.user_proj, user, &mut taste);
        rotate_first_plane(&mut taste, day as f64 * self.drift);

        let mut latent_item = vec![0.0; self.latent_dim];
        items
            .iter()
            .map(|v| {
                matvec(&self.item_proj, v, &mut latent_item);
                taste.iter().zip(&latent_item).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// Rotate `(w[0], w[1])` by `angle` radians, leaving other coordinates
/// untouched. A rotation preserves norms, so drift changes direction of
/// taste without inflating score magnitudes.
fn rotate_first_plane(w: &mut [f64], angle: f64) {
    if w.len() >= 2 && angle != 0.0 {
        let (sin, cos) = angle.sin_cos();
        let (w0, w1) = (w[0], w[1]);
        w[0] = cos * w0 - sin * w1;
        w[1] = sin * w0 + cos * w1;
    }
}

/// Write records as JSON Lines, one record per line.
pub fn write_jsonl(path: &Path, records: &[PVRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| Error::DatasetFormat {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSON Lines dataset; parse errors carry the 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<PVRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PVRecord = serde_json::from_str(&line).map_err(|e| Error::DatasetFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
