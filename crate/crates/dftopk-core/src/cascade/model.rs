//! Two-tower retrieval scorer plus a ranker MLP over one flat parameter
//! vector, with hand-written forward and backward passes.
//!
//! Retrieval: user and item features each pass through a 2-layer tower
//! (affine → tanh → affine) into a shared embedding space; the retrieval
//! score is the embedding dot product. Ranking: the concatenated
//! user‖item features pass through a 2-layer MLP to a scalar. Keeping all
//! parameters in one `Vec<f64>` makes the optimizer, finite-difference
//! checks, and serialization trivial.

use std::fs::File;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::data::PVRecord;
use crate::gradcheck::{instance_rng, name_salt};
use crate::math::matvec;
use crate::{Error, Result, ScoreVector};

/// Network widths. `hidden_dim` is the tower/ranker hidden width and
/// `embed_dim` the shared retrieval embedding size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub user_dim: usize,
    pub item_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl Dims {
    pub fn param_count(&self) -> usize {
        Layout::new(*self).total
    }

    fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("user_dim", self.user_dim),
            ("item_dim", self.item_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Offsets of the parameter blocks inside the flat vector, in layout order:
/// user tower (w1, b1, w2, b2), item tower (same), ranker (w1, b1, w2, b2).
/// All weight blocks are row-major.
#[derive(Debug, Clone, Copy)]
struct Layout {
    dims: Dims,
    user_w1: usize,
    user_b1: usize,
    user_w2: usize,
    user_b2: usize,
    item_w1: usize,
    item_b1: usize,
    item_w2: usize,
    item_b2: usize,
    rank_w1: usize,
    rank_b1: usize,
    rank_w2: usize,
    rank_b2: usize,
    total: usize,
}

impl Layout {
    fn new(dims: Dims) -> Self {
        let Dims {
            user_dim,
            item_dim,
            hidden_dim: h,
            embed_dim: e,
        } = dims;
        let mut next = 0usize;
        let mut block = |len: usize| {
            let at = next;
            next += len;
            at
        };
        let user_w1 = block(h * user_dim);
        let user_b1 = block(h);
        let user_w2 = block(e * h);
        let user_b2 = block(e);
        let item_w1 = block(h * item_dim);
        let item_b1 = block(h);
        let item_w2 = block(e * h);
        let item_b2 = block(e);
        let rank_w1 = block(h * (user_dim + item_dim));
        let rank_b1 = block(h);
        let rank_w2 = block(h);
        let rank_b2 = block(1);
        let total = next;
        Self {
            dims,
            user_w1,
            user_b1,
            user_w2,
            user_b2,
            item_w1,
            item_b1,
            item_w2,
            item_b2,
            rank_w1,
            rank_b1,
            rank_w2,
            rank_b2,
            total,
        }
    }
}

/// Per-record activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct PvActivations {
    n: usize,
    user_hidden: Vec<f64>,          // H
    user_embed: Vec<f64>,           // E
    item_hidden: Vec<f64>,          // n x H
    item_embed: Vec<f64>,           // n x E
    rank_hidden: Vec<f64>,          // n x H
    pub(crate) retrieval: Vec<f64>, // n
    pub(crate) ranking: Vec<f64>,   // n
}

#[derive(Debug, Clone)]
pub struct CascadeModel {
    layout: Layout,
    pub(crate) params: Vec<f64>,
}

impl CascadeModel {
    /// Random initialization: weights are normal with standard deviation
    /// `1/sqrt(fan_in)`, biases zero.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(dims);
        let mut model = Self {
            layout,
            params: vec![0.0; layout.total],
        };
        let mut rng = instance_rng(seed, name_salt("cascade-model"), 0);
        let ranker_in = dims.user_dim + dims.item_dim;
        // (weight offset, rows x cols) for every weight block; biases stay 0.
        let blocks = [
            (layout.user_w1, dims.hidden_dim, dims.user_dim),
            (layout.user_w2, dims.embed_dim, dims.hidden_dim),
            (layout.item_w1, dims.hidden_dim, dims.item_dim),
            (layout.item_w2, dims.embed_dim, dims.hidden_dim),
            (layout.rank_w1, dims.hidden_dim, ranker_in),
            (layout.rank_w2, 1, dims.hidden_dim),
        ];
        for (offset, rows, cols) in blocks {
            let scale = (cols as f64).sqrt().recip();
            for w in &mut model.params[offset..offset + rows * cols] {
                *w = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(model)
    }

    /// All-zero parameters; scores every candidate identically.
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(dims);
        Ok(Self {
            layout,
            params: vec![0.0; layout.total],
        })
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Retrieval and ranking scores for every candidate in the record.
    pub fn forward_scores(&self, pv: &PVRecord) -> Result<(ScoreVector, ScoreVector)> {
        let acts = self.forward_cached(pv)?;
        Ok((
            ScoreVector::new(acts.retrieval)?,
            ScoreVector::new(acts.ranking)?,
        ))
    }

    fn check_record(&self, pv: &PVRecord) -> Result<usize> {
        let dims = self.layout.dims;
        if pv.user_features.len() != dims.user_dim {
            return Err(Error::LengthMismatch {
                expected: dims.user_dim,
                actual: pv.user_features.len(),
            });
        }
        let n = pv.item_features.len();
        if n < 2 {
            return Err(Error::TooFewScores(n));
        }
        for row in &pv.item_features {
            if row.len() != dims.item_dim {
                return Err(Error::LengthMismatch {
                    expected: dims.item_dim,
                    actual: row.len(),
                });
            }
        }
        Ok(n)
    }

    pub(crate) fn forward_cached(&self, pv: &PVRecord) -> Result<PvActivations> {
        let n = self.check_record(pv)?;
        let lo = self.layout;
        let Dims {
            user_dim,
            item_dim,
            hidden_dim: h,
            embed_dim: e,
        } = lo.dims;
        let p = &self.params;

        let mut user_hidden = vec![0.0; h];
        matvec(
            &p[lo.user_w1..lo.user_b1],
            &pv.user_features,
            &mut user_hidden,
        );
        tanh_layer(&mut user_hidden, &p[lo.user_b1..lo.user_w2]);
        let mut user_embed = vec![0.0; e];
        matvec(&p[lo.user_w2..lo.user_b2], &user_hidden, &mut user_embed);
        add(&mut user_embed, &p[lo.user_b2..lo.item_w1]);

        // Ranker hidden contribution of the user half of the concatenated
        // input, shared by every item row.
        let ranker_in = user_dim + item_dim;
        let rank_w1 = &p[lo.rank_w1..lo.rank_b1];
        let mut rank_user = vec![0.0; h];
        for (r, out) in rank_user.iter_mut().enumerate() {
            let row = &rank_w1[r * ranker_in..r * ranker_in + user_dim];
            *out = dot(row, &pv.user_features);
        }

        let mut item_hidden = vec![0.0; n * h];
        let mut item_embed = vec![0.0; n * e];
        let mut rank_hidden = vec![0.0; n * h];
        let mut retrieval = vec![0.0; n];
        let mut ranking = vec![0.0; n];
        let rank_w2 = &p[lo.rank_w2..lo.rank_b2];
        let rank_b2 = p[lo.rank_b2];
        for (j, item) in pv.item_features.iter().enumerate() {
            let hid = &mut item_hidden[j * h..(j + 1) * h];
            matvec(&p[lo.item_w1..lo.item_b1], item, hid);
            tanh_layer(hid, &p[lo.item_b1..lo.item_w2]);
            let emb = &mut item_embed[j * e..(j + 1) * e];
            matvec(&p[lo.item_w2..lo.item_b2], hid, emb);
            add(emb, &p[lo.item_b2..lo.rank_w1]);
            retrieval[j] = dot(&user_embed, emb);

            let rhid = &mut rank_hidden[j * h..(j + 1) * h];
            for (r, out) in rhid.iter_mut().enumerate() {
                let row = &rank_w1[r * ranker_in + user_dim..(r + 1) * ranker_in];
                *out = (rank_user[r] + p[lo.rank_b1 + r] + dot(row, item)).tanh();
            }
            ranking[j] = dot(rank_w2, rhid) + rank_b2;
        }

        Ok(PvActivations {
            n,
            user_hidden,
            user_embed,
            item_hidden,
            item_embed,
            rank_hidden,
            retrieval,
            ranking,
        })
    }

    /// Accumulate parameter gradients for one record into `grad`, given
    /// upstream derivatives with respect to the retrieval and ranking
    /// scores. `acts` must come from `forward_cached` on the same record
    /// and parameters.
    pub(crate) fn backward(
        &self,
        pv: &PVRecord,
        acts: &PvActivations,
        d_retrieval: &[f64],
        d_ranking: &[f64],
        grad: &mut [f64],
    ) {
        let lo = self.layout;
        let Dims {
            user_dim,
            item_dim,
            hidden_dim: h,
            embed_dim: e,
        } = lo.dims;
        assert_eq!(acts.n, pv.item_features.len());
        assert_eq!(d_retrieval.len(), acts.n);
        assert_eq!(d_ranking.len(), acts.n);
        assert_eq!(grad.len(), lo.total);
        let p = &self.params;
        let ranker_in = user_dim + item_dim;

        let mut d_user_embed = vec![0.0; e];
        let mut d_embed = vec![0.0; e];
        let mut d_hidden = vec![0.0; h];
        for (j, item) in pv.item_features.iter().enumerate() {
            let emb = &acts.item_embed[j * e..(j + 1) * e];
            let hid = &acts.item_hidden[j * h..(j + 1) * h];

            // Retrieval dot product: score_j = <user_embed, item_embed_j>.
            let g = d_retrieval[j];
            for (de, &ue) in d_embed.iter_mut().zip(&acts.user_embed) {
                *de = g * ue;
            }
            for (du, &ie) in d_user_embed.iter_mut().zip(emb) {
                *du += g * ie;
            }
            // Item tower second layer.
            for r in 0..e {
                grad[lo.item_b2 + r] += d_embed[r];
                let row = lo.item_w2 + r * h;
                for c in 0..h {
                    grad[row + c] += d_embed[r] * hid[c];
                }
            }
            // Through tanh into the first layer.
            for c in 0..h {
                let mut acc = 0.0;
                for r in 0..e {
                    acc += d_embed[r] * p[lo.item_w2 + r * h + c];
                }
                d_hidden[c] = acc * (1.0 - hid[c] * hid[c]);
            }
            for r in 0..h {
                grad[lo.item_b1 + r] += d_hidden[r];
                let row = lo.item_w1 + r * item_dim;
                for (c, &v) in item.iter().enumerate() {
                    grad[row + c] += d_hidden[r] * v;
                }
            }

            // Ranker: scalar output through one hidden layer.
            let q = d_ranking[j];
            if q != 0.0 {
                let rhid = &acts.rank_hidden[j * h..(j + 1) * h];
                grad[lo.rank_b2] += q;
                for c in 0..h {
                    grad[lo.rank_w2 + c] += q * rhid[c];
                    let da = q * p[lo.rank_w2 + c] * (1.0 - rhid[c] * rhid[c]);
                    grad[lo.rank_b1 + c] += da;
                    let row = lo.rank_w1 + c * ranker_in;
                    for (i, &v) in pv.user_features.iter().enumerate() {
                        grad[row + i] += da * v;
                    }
                    for (i, &v) in item.iter().enumerate() {
                        grad[row + user_dim + i] += da * v;
                    }
                }
            }
        }

        // User tower, once per record.
        for r in 0..e {
            grad[lo.user_b2 + r] += d_user_embed[r];
            let row = lo.user_w2 + r * h;
            for c in 0..h {
                grad[row + c] += d_user_embed[r] * acts.user_hidden[c];
            }
        }
        for c in 0..h {
            let mut acc = 0.0;
            for r in 0..e {
                acc += d_user_embed[r] * p[lo.user_w2 + r * h + c];
            }
            d_hidden[c] = acc * (1.0 - acts.user_hidden[c] * acts.user_hidden[c]);
        }
        for r in 0..h {
            grad[lo.user_b1 + r] += d_hidden[r];
            let row = lo.user_w1 + r * user_dim;
            for (c, &v) in pv.user_features.iter().enumerate() {
                grad[row + c] += d_hidden[r] * v;
            }
        }
    }

    /// Serialize to `path`. Fixed layout, little-endian: magic `DFTK`,
    /// format version, the four dimensions, parameter count, then the raw
    /// parameter block.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dims = self.layout.dims;
        let mut out = Vec::with_capacity(4 + 4 * 5 + 8 + 8 * self.params.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for d in [
            dims.user_dim,
            dims.item_dim,
            dims.hidden_dim,
            dims.embed_dim,
        ] {
            let d =
                u32::try_from(d).map_err(|_| Error::ModelFormat("dimension too large".into()))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let mut cursor = Cursor {
            bytes: &bytes,
            at: 0,
        };
        if cursor.take(4)? != MAGIC {
            return Err(Error::ModelFormat("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut dim = || -> Result<usize> {
            Ok(u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize)
        };
        let dims = Dims {
            user_dim: dim()?,
            item_dim: dim()?,
            hidden_dim: dim()?,
            embed_dim: dim()?,
        };
        dims.validate()
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let count = u64::from_le_bytes(cursor.take(8)?.try_into().unwrap()) as usize;
        let layout = Layout::new(dims);
        if count != layout.total {
            return Err(Error::ModelFormat(format!(
                "parameter count {count} does not match dimensions (expected {})",
                layout.total
            )));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let v = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::ModelFormat("non-finite parameter".into()));
            }
            params.push(v);
        }
        if cursor.at != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(Self { layout, params })
    }
}

const MAGIC: [u8; 4] = *b"DFTK";
const FORMAT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.at + len > self.bytes.len() {
            return Err(Error::ModelFormat("file truncated".into()));
        }
        let s = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(out: &mut [f64], b: &[f64]) {
    for (o, &v) in out.iter_mut().zip(b) {
        *o += v;
    }
}

/// `out[i] = tanh(out[i] + bias[i])`.
fn tanh_layer(out: &mut [f64], bias: &[f64]) {
    for (o, &b) in out.iter_mut().zip(bias) {
        *o = (*o + b).tanh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::data::PVRecord;
    use crate::gradcheck::compare_gradients;
    use crate::LabelVector;

    fn tiny_dims() -> Dims {
        Dims {
            user_dim: 2,
            item_dim: 2,
            hidden_dim: 2,
            embed_dim: 2,
        }
    }

    fn pv(user: Vec<f64>, items: Vec<Vec<f64>>) -> PVRecord {
        let n = items.len();
        let mut labels = vec![0u8; n];
        labels[0] = 1;
        PVRecord {
            day: 0,
            user_features: user,
            item_features: items,
            labels: LabelVector::new(labels).unwrap(),
        }
    }

    #[test]
    fn layout_partitions_the_parameter_vector() {
        let lo = Layout::new(Dims {
            user_dim: 16,
            item_dim: 16,
            hidden_dim: 32,
            embed_dim: 8,
        });
        // user: 32*16 + 32 + 8*32 + 8; item the same; ranker: 32*32 + 32 + 32 + 1.
        assert_eq!(
            lo.total,
            (32 * 16 + 32 + 8 * 32 + 8) * 2 + 32 * 32 + 32 + 32 + 1
        );
        assert_eq!(Layout::new(tiny_dims()).total, 37);
    }

    #[test]
    fn zero_parameters_score_all_candidates_equally() {
        let model = CascadeModel::zeros(tiny_dims()).unwrap();
        let record = pv(
            vec![0.7, -1.3],
            vec![vec![2.0, 1.0], vec![-4.0, 0.5], vec![0.0, 9.0]],
        );
        let (retrieval, ranking) = model.forward_scores(&record).unwrap();
        assert!(retrieval.iter().all(|&s| s == 0.0));
        assert!(ranking.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn forward_matches_hand_computed_arithmetic() {
        let dims = tiny_dims();
        let mut model = CascadeModel::zeros(dims).unwrap();
        #[rustfmt::skip]
        let params = vec![
            // user tower
            0.1, 0.2, 0.3, -0.1,      // user_w1 (2x2)
            0.05, -0.05,              // user_b1
            1.0, 0.5, -0.5, 0.25,     // user_w2 (2x2)
            0.1, 0.2,                 // user_b2
            // item tower
            -0.2, 0.4, 0.1, 0.3,      // item_w1
            0.0, 0.1,                 // item_b1
            0.6, -0.3, 0.2, 0.8,      // item_w2
            -0.1, 0.0,                // item_b2
            // ranker (input = user ++ item, 4 wide)
            0.1, -0.2, 0.3, 0.05, -0.4, 0.2, 0.1, -0.3, // rank_w1 (2x4)
            0.2, -0.1,                // rank_b1
            0.7, -0.6,                // rank_w2
            0.15,                     // rank_b2
        ];
        model.params.copy_from_slice(&params);

        let u = [1.0, -1.0];
        let v = [0.5, 2.0];
        let record = pv(u.to_vec(), vec![v.to_vec(), vec![0.0, 0.0]]);
        let (retrieval, ranking) = model.forward_scores(&record).unwrap();

        let hu = [
            (0.1 * u[0] + 0.2 * u[1] + 0.05).tanh(),
            (0.3 * u[0] - 0.1 * u[1] - 0.05).tanh(),
        ];
        let eu = [
            1.0 * hu[0] + 0.5 * hu[1] + 0.1,
            -0.5 * hu[0] + 0.25 * hu[1] + 0.2,
        ];
        let hi = [
            (-0.2 * v[0] + 0.4 * v[1] + 0.0).tanh(),
            (0.1 * v[0] + 0.3 * v[1] + 0.1).tanh(),
        ];
        let ei = [
            0.6 * hi[0] - 0.3 * hi[1] - 0.1,
            0.2 * hi[0] + 0.8 * hi[1] + 0.0,
        ];
        let expected_retrieval = eu[0] * ei[0] + eu[1] * ei[1];
        let hr = [
            (0.1 * u[0] - 0.2 * u[1] + 0.3 * v[0] + 0.05 * v[1] + 0.2).tanh(),
            (-0.4 * u[0] + 0.2 * u[1] + 0.1 * v[0] - 0.3 * v[1] - 0.1).tanh(),
        ];
        let expected_ranking = 0.7 * hr[0] - 0.6 * hr[1] + 0.15;

        assert!((retrieval[0] - expected_retrieval).abs() < 1e-15);
        assert!((ranking[0] - expected_ranking).abs() < 1e-15);
    }

    #[test]
    fn initialized_model_produces_finite_scores() {
        let dims = Dims {
            user_dim: 16,
            item_dim: 16,
            hidden_dim: 32,
            embed_dim: 8,
        };
        let model = CascadeModel::init(dims, 7).unwrap();
        let mut next = 0.3f64;
        let mut feature = || {
            next = (next * 97.0 + 13.0).sin() * 2.0;
            next
        };
        let user: Vec<f64> = (0..16).map(|_| feature()).collect();
        let items: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..16).map(|_| feature()).collect())
            .collect();
        let record = pv(user, items);
        // ScoreVector construction rejects non-finite values, so Ok is the assertion.
        let (retrieval, ranking) = model.forward_scores(&record).unwrap();
        assert_eq!(retrieval.len(), 50);
        assert_eq!(ranking.len(), 50);
        // Not all scores identical under random weights.
        assert!(retrieval.iter().any(|&s| (s - retrieval[0]).abs() > 1e-9));
    }

    #[test]
    fn record_shape_mismatches_are_rejected() {
        let model = CascadeModel::zeros(tiny_dims()).unwrap();
        let bad_user = pv(vec![1.0, 2.0, 3.0], vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(
            model.forward_scores(&bad_user),
            Err(Error::LengthMismatch {
                expected: 2,
                actual: 3
            })
        ));
        let bad_item = pv(vec![1.0, 2.0], vec![vec![0.0, 0.0], vec![1.0]]);
        assert!(matches!(
            model.forward_scores(&bad_item),
            Err(Error::LengthMismatch {
                expected: 2,
                actual: 1
            })
        ));
        let too_few = pv(vec![1.0, 2.0], vec![vec![0.0, 0.0]]);
        assert!(matches!(
            model.forward_scores(&too_few),
            Err(Error::TooFewScores(1))
        ));
    }

    #[test]
    fn backward_matches_finite_differences_on_a_linear_functional() {
        // Probe d/dparams of sum_j (c_j * retrieval_j + d_j * ranking_j),
        // which exercises every parameter block without a loss on top.
        let dims = tiny_dims();
        let mut model = CascadeModel::init(dims, 11).unwrap();
        let record = pv(
            vec![0.8, -0.4],
            vec![vec![0.5, 2.0], vec![-1.0, 0.3], vec![0.2, -0.7]],
        );
        let c = [0.9, -1.1, 0.4];
        let d = [-0.6, 0.2, 1.3];

        let acts = model.forward_cached(&record).unwrap();
        let mut analytic = vec![0.0; model.param_count()];
        model.backward(&record, &acts, &c, &d, &mut analytic);

        let step = 1e-6;
        let mut numeric = vec![0.0; model.param_count()];
        for (p, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params[p];
            let mut eval = |v: f64| {
                model.params[p] = v;
                let a = model.forward_cached(&record).unwrap();
                let mut s = 0.0;
                for j in 0..3 {
                    s += c[j] * a.retrieval[j] + d[j] * a.ranking[j];
                }
                s
            };
            let plus = eval(orig + step);
            let minus = eval(orig - step);
            model.params[p] = orig;
            *slot = (plus - minus) / (2.0 * step);
        }

        let (rel, _, failures) = compare_gradients(&analytic, &numeric, 1e-6);
        assert_eq!(failures, 0, "max relative error {rel:e}");
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let model = CascadeModel::init(tiny_dims(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        let back = CascadeModel::load(&path).unwrap();
        assert_eq!(back.dims(), model.dims());
        assert_eq!(back.params, model.params);

        // Saving twice produces identical bytes.
        let path2 = dir.path().join("model2.bin");
        model.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn corrupt_model_files_are_rejected() {
        let model = CascadeModel::init(tiny_dims(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let check = |bytes: Vec<u8>, needle: &str| {
            let bad = dir.path().join("bad.bin");
            std::fs::write(&bad, bytes).unwrap();
            match CascadeModel::load(&bad) {
                Err(Error::ModelFormat(msg)) => {
                    assert!(msg.contains(needle), "{msg:?} missing {needle:?}")
                }
                other => panic!(
                    "expected model-format error, got {:?}",
                    other.map(|m| m.dims())
                ),
            }
        };

        let mut wrong_magic = good.clone();
        wrong_magic[0] = b'X';
        check(wrong_magic, "magic");

        let mut wrong_version = good.clone();
        wrong_version[4] = 99;
        check(wrong_version, "version");

        check(good[..good.len() - 3].to_vec(), "truncated");

        let mut trailing = good.clone();
        trailing.push(0);
        check(trailing, "trailing");

        let mut nan = good.clone();
        let at = nan.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        check(nan, "non-finite");

        let mut wrong_count = good;
        wrong_count[24..32].copy_from_slice(&999u64.to_le_bytes());
        check(wrong_count, "count");
    }
}
