//! Wall-clock microbenchmarks of the listwise losses.
//!
//! Each cell times one loss forward plus one backward at K = ⌊N/2⌋ on a
//! fresh standard-normal score vector with a fresh random K-positive label
//! set per repetition. Input generation happens outside the timed window,
//! timing is strictly single-threaded on a monotonic clock, and the median
//! over the timed repetitions is reported — wall-clock numbers are the one
//! output of this crate that is not reproducible byte-for-byte.
//!
//! The summary fit regresses ln(median) on ln(N) over the largest half of
//! the size grid, where per-call overhead no longer biases the exponent.
//! With very few repetitions or sizes (e.g. `--reps 1 --warmup 0`) rows
//! are still emitted but the slope carries no guarantee.

use std::hint::black_box;
use std::time::Instant;

use dftopk_core::baselines::{permutation_loss, permutation_loss_backward, PermutationKind};
use dftopk_core::operator::{dftopk_loss, dftopk_loss_backward, strict_loss, strict_loss_backward};
use dftopk_core::{LabelVector, Result, ScoreVector, TopKConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{config_err, BenchOp, RunConfig};

/// All benchmark losses run at this temperature; the scaling exponent is
/// temperature-independent.
const BENCH_TAU: f64 = 1.0;
/// Residual tolerance of the bisection reference.
const STRICT_EPS: f64 = 1e-10;

pub const BENCH_CSV_HEADER: &str = "operator,n,k,median_ns,reps,warmup";
pub const SLOPES_CSV_HEADER: &str = "operator,points,slope";

/// One timed cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub operator: BenchOp,
    pub n: usize,
    pub k: usize,
    pub median_ns: u128,
    pub reps: usize,
    pub warmup: usize,
}

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.operator, self.n, self.k, self.median_ns, self.reps, self.warmup
        )
    }
}

/// Log-log least-squares exponent for one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub operator: BenchOp,
    /// Number of (N, median) points in the fit.
    pub points: usize,
    pub slope: f64,
}

impl SlopeRow {
    pub fn csv_row(&self) -> String {
        format!("{},{},{:.4}", self.operator, self.points, self.slope)
    }
}

/// Times every configured (operator, size) cell and fits the slopes.
pub fn run_bench(cfg: &RunConfig) -> Result<(Vec<BenchRow>, Vec<SlopeRow>)> {
    if cfg.ops.is_empty() {
        return Err(config_err("ops", "need at least one operator"));
    }
    if cfg.sizes.is_empty() {
        return Err(config_err("sizes", "need at least one size"));
    }
    if let Some(bad) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(config_err(
            "sizes",
            format!("sizes must be >= 2, got {bad}"),
        ));
    }
    if cfg.reps == 0 {
        return Err(config_err("reps", "need at least one timed repetition"));
    }
    if cfg.batch == 0 {
        return Err(config_err(
            "batch",
            "need at least one vector per repetition",
        ));
    }
    let mut rows = Vec::with_capacity(cfg.ops.len() * cfg.sizes.len());
    for (op_index, &op) in cfg.ops.iter().enumerate() {
        for &n in &cfg.sizes {
            rows.push(time_cell(op, op_index, n, cfg)?);
        }
    }
    let slopes = fit_slopes(&rows, &cfg.ops);
    Ok((rows, slopes))
}

fn time_cell(op: BenchOp, op_index: usize, n: usize, cfg: &RunConfig) -> Result<BenchRow> {
    let k = n / 2;
    let top = TopKConfig::new(k, BENCH_TAU)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(((op_index as u64) << 32) | n as u64);

    let draw = |rng: &mut ChaCha20Rng| -> Result<(ScoreVector, LabelVector)> {
        let values: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mut labels = vec![0u8; n];
        for i in rand::seq::index::sample(rng, n, k) {
            labels[i] = 1;
        }
        Ok((ScoreVector::new(values)?, LabelVector::new(labels)?))
    };

    for _ in 0..cfg.warmup {
        let (x, y) = draw(&mut rng)?;
        black_box(run_once(op, &x, &y, k, &top)?);
    }
    let mut times = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let inputs: Vec<_> = (0..cfg.batch)
            .map(|_| draw(&mut rng))
            .collect::<Result<_>>()?;
        let start = Instant::now();
        for (x, y) in &inputs {
            black_box(run_once(op, x, y, k, &top)?);
        }
        times.push(start.elapsed().as_nanos());
    }
    times.sort_unstable();
    let median_ns = (times[(cfg.reps - 1) / 2] + times[cfg.reps / 2]) / 2;
    Ok(BenchRow {
        operator: op,
        n,
        k,
        median_ns,
        reps: cfg.reps,
        warmup: cfg.warmup,
    })
}

fn run_once(
    op: BenchOp,
    x: &ScoreVector,
    y: &LabelVector,
    k: usize,
    top: &TopKConfig,
) -> Result<f64> {
    let (loss, grad) = match op {
        BenchOp::Dftopk => (dftopk_loss(x, y, top)?, dftopk_loss_backward(x, y, top)?),
        BenchOp::NeuralSort => (
            permutation_loss(x, y, k, BENCH_TAU, PermutationKind::NeuralSort)?,
            permutation_loss_backward(x, y, k, BENCH_TAU, PermutationKind::NeuralSort)?,
        ),
        BenchOp::SoftSort => (
            permutation_loss(x, y, k, BENCH_TAU, PermutationKind::SoftSort)?,
            permutation_loss_backward(x, y, k, BENCH_TAU, PermutationKind::SoftSort)?,
        ),
        BenchOp::StrictBisect => (
            strict_loss(x, y, top, STRICT_EPS)?,
            strict_loss_backward(x, y, top, STRICT_EPS)?,
        ),
    };
    Ok(loss + grad[0])
}

/// Least-squares slope of ln(median_ns) against ln(N) per operator, using
/// the largest ⌈half⌉ of the distinct sizes. Operators with fewer than two
/// usable points get no row.
fn fit_slopes(rows: &[BenchRow], ops: &[BenchOp]) -> Vec<SlopeRow> {
    let mut slopes = Vec::new();
    for &op in ops {
        let mut points: Vec<(usize, u128)> = rows
            .iter()
            .filter(|r| r.operator == op)
            .map(|r| (r.n, r.median_ns))
            .collect();
        points.sort_unstable();
        points.dedup_by_key(|p| p.0);
        let keep = points.len().div_ceil(2);
        let upper = &points[points.len() - keep..];
        if upper.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = upper.iter().map(|&(n, _)| (n as f64).ln()).collect();
        let ys: Vec<f64> = upper
            .iter()
            .map(|&(_, ns)| (ns.max(1) as f64).ln())
            .collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
        slopes.push(SlopeRow {
            operator: op,
            points: upper.len(),
            slope: sxy / sxx,
        });
    }
    slopes
}

/// Renders rows as CSV with the documented header.
pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    for row in rows {
        out.push('\n');
        out.push_str(&row.csv_row());
    }
    out.push('\n');
    out
}

pub fn slopes_csv(slopes: &[SlopeRow]) -> String {
    let mut out = String::from(SLOPES_CSV_HEADER);
    for row in slopes {
        out.push('\n');
        out.push_str(&row.csv_row());
    }
    out.push('\n');
    out
}
