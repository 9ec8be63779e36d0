//! Finite-difference oracle and the seeded property suite.
//!
//! Every differentiable routine in this crate ships an analytic gradient;
//! this module is the independent second route. Central differences probe
//! the scalar losses coordinate by coordinate, guarded so no probe crosses
//! a rank-ordering boundary (the operators are piecewise smooth, and a
//! crossing would compare gradients of different smoothness regions).
//!
//! [`run_property_suite`] replays every library invariant over seeded
//! random instances and returns one [`GradCheckReport`] per check.
//! Check name -> invariant exercised:
//!
//! * `select_oracle_equivalence` — selection and hard masks agree with a
//!   full descending sort, including tie-heavy inputs.
//! * `forward_monotonicity` — higher score never gets a lower probability;
//!   equal scores get equal probabilities.
//! * `forward_translation_invariance` — adding a constant to every score
//!   leaves the mask unchanged: bitwise for exactly-representable shifts,
//!   within 1e-9 per entry for arbitrary shifts at moderate temperature.
//! * `forward_scaling_selection` — positive rescaling preserves the
//!   selected boundary indices.
//! * `forward_approximation_bound` — at tau = gap/100 the mask deviates
//!   from the hard mask by at most sigmoid(-50) < 2e-22 per entry.
//! * `forward_boundary_complement` — the two boundary probabilities sum
//!   to exactly 1.0.
//! * `loss_gradient_fd` — analytic BCE gradient vs central differences,
//!   relative error < 1e-5.
//! * `loss_gradient_zero_sum` — the gradient sums to zero within 1e-12 N.
//! * `vjp_fd` — the general vector-Jacobian product vs central
//!   differences of an upstream-weighted forward.
//! * `strict_threshold_residual` — the bisection threshold meets its
//!   sum-to-k residual tolerance on every call.
//! * `permutation_row_sums` — both sorting relaxations stay row-stochastic
//!   within 1e-6.
//! * `permutation_hard_limit` — both relaxations reach the full-sort
//!   permutation within 1e-6 at tau = gap/100.
//! * `expected_topk_hard_count` — on a hard permutation the expectation
//!   equals the exact positive count in the true top K.
//! * `neuralsort_gradient_fd`, `softsort_gradient_fd` — baseline loss
//!   gradients vs central differences, relative error < 1e-4.
//!
//! Relative error uses the gradient-magnitude denominator
//! max(1e-8, ||a||_inf, ||b||_inf): per-coordinate denominators would
//! demand more precision of the finite differences than f64 arithmetic
//! can deliver at extreme temperatures, where most coordinates are
//! saturated and individually carry no signal.

use std::thread;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use crate::baselines::{
    expected_topk, neuralsort_forward, permutation_loss, permutation_loss_backward,
    softsort_forward, PermutationKind, SoftPermutation,
};
use crate::operator::{
    dftopk_forward, dftopk_loss, dftopk_loss_backward, dftopk_vjp, strict_threshold,
};
use crate::select::{hard_topk, select_rank_pair};
use crate::types::{LabelVector, ScoreVector, TopKConfig};
use crate::{Error, Result};

/// Central-difference step used throughout the suite.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error budget for the operator loss gradient.
pub const LOSS_GRAD_REL_TOL: f64 = 1e-5;
/// Relative-error budget for the baseline loss gradients.
pub const BASELINE_GRAD_REL_TOL: f64 = 1e-4;
/// Relative-error budget for the operator VJP.
pub const VJP_REL_TOL: f64 = 1e-5;

const TRANSLATION_ABS_TOL: f64 = 1e-9;
const ZERO_SUM_TOL_PER_ITEM: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-6;
const HARD_LIMIT_TOL: f64 = 1e-6;
const APPROX_BOUND: f64 = 2e-22;
const STRICT_EPS: f64 = 1e-10;

/// Multiplier on the irreducible central-difference round-off,
/// eps_f64 * |f(x)| / (2 step). An instance whose whole deviation vector
/// sits below this floor carries no comparable signal: the listwise losses
/// plateau on saturated inputs, where the true gradient is essentially
/// zero and finite differences of an O(k) function measure nothing but
/// f64 rounding. The multiplier budgets ulps accumulated across one loss
/// evaluation; the permutation losses chain O(N) additions per logit, so
/// the observed worst case (~17 ulps on a saturated 3-item instance) needs
/// comfortable headroom beyond a single rounding step.
const FD_NOISE_SAFETY: f64 = 64.0;

/// Every instance keeps adjacent (unscaled) scores at least this far
/// apart, so an FD probe of `FD_STEP` can never flip the rank order even
/// after the 1e-3 temperature scaling.
const MIN_UNIT_GAP: f64 = 0.021;

/// Floor on the mean excess spacing beyond the hard minimum. 6/N spreads
/// short lists over a few sigmoid widths on its own; for long lists the
/// floor thins the sigmoid's active window, whose accumulated third
/// derivative sets the FD truncation error through the shared-threshold
/// path. Without it the N=257 instances at the coldest grid temperature
/// reach ~80% of the gradient tolerance; with it they stay several times
/// under, while dozens of items still land inside the active window.
const MIN_EXCESS_SPACING: f64 = 0.15;

const N_GRID: [usize; 6] = [2, 3, 5, 17, 64, 257];
const TAU_GRID: [f64; 5] = [1e-3, 0.1, 1.0, 10.0, 500.0];
/// Baseline FD checks run at moderate temperatures: their softmax logits
/// rescale with N/tau, and central differences of a near-hard softmax are
/// pure round-off noise.
const BASELINE_TAU_GRID: [f64; 3] = [0.3, 1.0, 3.0];
/// Baseline FD checks are Theta(N^3) per instance; capped so the suite
/// stays well inside its time budget.
const BASELINE_N_CAP: usize = 64;

/// Outcome of one named check over its instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op_name: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Suite execution options. `threads = 1` reproduces the serial order;
/// any thread count produces byte-identical reports because instances are
/// independent and the aggregation is max/sum only.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub threads: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// Minimum difference between adjacent sorted values (0 on ties).
pub fn min_adjacent_gap(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Central finite differences of `f` at `x`:
/// g_i = (f(x + step e_i) - f(x - step e_i)) / (2 step).
///
/// Rejects probes that could cross a rank-ordering boundary: the minimum
/// adjacent gap of `x` must exceed 2 step.
pub fn central_difference(
    f: impl Fn(&[f64]) -> f64,
    x: &ScoreVector,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidStep(step));
    }
    let gap = min_adjacent_gap(x);
    if gap <= 2.0 * step {
        return Err(Error::GapTooSmall { gap, step });
    }
    let mut probe = x.to_vec();
    Ok((0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let hi = f(&probe);
            probe[i] = orig - step;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * step)
        })
        .collect())
}

/// Shared denominator for gradient comparisons.
fn grad_denominator(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .chain(b.iter())
        .fold(1e-8f64, |m, &v| m.max(v.abs()))
}

/// Compare two gradients coordinate-wise against `rel_tol` scaled by the
/// shared magnitude. Returns (max relative error, max absolute error,
/// number of failing coordinates).
pub(crate) fn compare_gradients(
    analytic: &[f64],
    numeric: &[f64],
    rel_tol: f64,
) -> (f64, f64, usize) {
    let denom = grad_denominator(analytic, numeric);
    let mut max_abs = 0.0f64;
    let mut failures = 0usize;
    for (&a, &b) in analytic.iter().zip(numeric.iter()) {
        let diff = (a - b).abs();
        max_abs = max_abs.max(diff);
        if diff > rel_tol * denom {
            failures += 1;
        }
    }
    (max_abs / denom, max_abs, failures)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable (compiler- and platform-independent) name hash: FNV-1a.
pub(crate) fn name_salt(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn instance_rng(seed: u64, salt: u64, idx: u64) -> ChaCha20Rng {
    let mixed = splitmix64(splitmix64(seed ^ salt).wrapping_add(idx));
    ChaCha20Rng::seed_from_u64(mixed)
}

/// Random scores with a guaranteed minimum adjacent gap: spacings are
/// `min_gap` plus an exponential excess, prefix-summed, centred, then
/// assigned to positions in shuffled order. (Plain i.i.d. normals would
/// make the gap condition unreachable at N = 257.)
fn sample_separated(rng: &mut ChaCha20Rng, n: usize, min_gap: f64) -> Vec<f64> {
    let excess_mean = (6.0 / n as f64).max(MIN_EXCESS_SPACING);
    let exp = Exp::new(1.0 / excess_mean).expect("positive rate");
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    values.push(0.0);
    for _ in 1..n {
        acc += min_gap + exp.sample(rng);
        values.push(acc);
    }
    let mean = acc / 2.0;
    for v in &mut values {
        *v -= mean;
    }
    values.shuffle(rng);
    values
}

fn random_labels(rng: &mut ChaCha20Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect()
}

struct OperatorInstance {
    x: ScoreVector,
    y: LabelVector,
    cfg: TopKConfig,
}

/// Instance grid for the operator checks: N and tau cycle through their
/// grids with the instance index, scores are tau-scaled so every
/// temperature sees comparably-conditioned inputs.
fn operator_instance(seed: u64, salt: u64, idx: u64) -> OperatorInstance {
    let mut rng = instance_rng(seed, salt, idx);
    let n = N_GRID[(idx as usize) % N_GRID.len()];
    let tau = TAU_GRID[(idx as usize / N_GRID.len()) % TAU_GRID.len()];
    let z = sample_separated(&mut rng, n, MIN_UNIT_GAP);
    let x = ScoreVector::new(z.iter().map(|v| v * tau).collect()).expect("finite");
    let mut labels = random_labels(&mut rng, n);
    // Pin one violated pair: lowest score positive, highest negative.
    // An all-satisfied labelling can cancel the residuals to near zero,
    // and the relative FD comparison would then be scaled by luck instead
    // of the loss's natural 1/(N*tau) sensitivity.
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in z.iter().enumerate() {
        if v < z[lo] {
            lo = i;
        }
        if v > z[hi] {
            hi = i;
        }
    }
    labels[lo] = 1;
    labels[hi] = 0;
    let y = LabelVector::new(labels).expect("labels are binary");
    let k = rng.gen_range(1..n);
    OperatorInstance {
        x,
        y,
        cfg: TopKConfig::new(k, tau).expect("grid tau is valid"),
    }
}

struct BaselineInstance {
    x: ScoreVector,
    y: LabelVector,
    k: usize,
    tau: f64,
}

fn baseline_instance(seed: u64, salt: u64, idx: u64) -> BaselineInstance {
    let mut rng = instance_rng(seed, salt, idx);
    let n = N_GRID[(idx as usize) % N_GRID.len()].min(BASELINE_N_CAP);
    let tau = BASELINE_TAU_GRID[(idx as usize / N_GRID.len()) % BASELINE_TAU_GRID.len()];
    let x = ScoreVector::new(sample_separated(&mut rng, n, MIN_UNIT_GAP)).expect("finite");
    let y = LabelVector::new(random_labels(&mut rng, n)).expect("labels are binary");
    // k stays in [1, n-1]: at k = n the expected count is flat in x up to
    // the relaxation's column-sum imbalance, which sits below what the FD
    // step can resolve.
    let k = rng.gen_range(1..n);
    BaselineInstance { x, y, k, tau }
}

/// Per-instance result, merged by max/max/sum.
#[derive(Clone, Copy)]
struct Outcome {
    rel: f64,
    abs: f64,
    failures: usize,
}

impl Outcome {
    const CLEAN: Self = Self {
        rel: 0.0,
        abs: 0.0,
        failures: 0,
    };

    fn violation(rel: f64, abs: f64, failures: usize) -> Self {
        Self { rel, abs, failures }
    }
}

fn run_check(
    name: &str,
    instances: usize,
    threads: usize,
    eval: &(dyn Fn(u64) -> Outcome + Sync),
) -> GradCheckReport {
    let threads = threads.max(1).min(instances.max(1));
    let chunk = instances.div_ceil(threads);
    let mut partials: Vec<Outcome> = Vec::with_capacity(threads);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(instances);
                scope.spawn(move || {
                    let mut agg = Outcome::CLEAN;
                    for idx in lo..hi {
                        let out = eval(idx as u64);
                        agg.rel = agg.rel.max(out.rel);
                        agg.abs = agg.abs.max(out.abs);
                        agg.failures += out.failures;
                    }
                    agg
                })
            })
            .collect();
        for handle in handles {
            partials.push(handle.join().expect("check worker panicked"));
        }
    });
    let mut agg = Outcome::CLEAN;
    for p in partials {
        agg.rel = agg.rel.max(p.rel);
        agg.abs = agg.abs.max(p.abs);
        agg.failures += p.failures;
    }
    GradCheckReport {
        op_name: name.to_string(),
        instances,
        max_rel_error: agg.rel,
        max_abs_error: agg.abs,
        failures: agg.failures,
    }
}

fn fd_outcome(analytic: &[f64], numeric: &[f64], rel_tol: f64, loss_scale: f64) -> Outcome {
    let noise_floor = FD_NOISE_SAFETY * f64::EPSILON * loss_scale.abs() / (2.0 * FD_STEP);
    let (rel, abs, failures) = compare_gradients(analytic, numeric, rel_tol);
    if abs <= noise_floor {
        return Outcome::CLEAN;
    }
    Outcome::violation(rel, abs, failures)
}

/// Full-sort ranking oracle: indices in rank order (descending value,
/// ascending index on ties).
fn oracle_ranking(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap().then(i.cmp(&j)));
    order
}

fn check_select_oracle(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "select_oracle_equivalence";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let n = N_GRID[(idx as usize) % N_GRID.len()];
        // Half the instances draw from a 5-value alphabet to force ties.
        let values: Vec<f64> = if idx % 2 == 0 {
            (0..n).map(|_| f64::from(rng.gen_range(0..5u8))).collect()
        } else {
            sample_separated(&mut rng, n, MIN_UNIT_GAP)
        };
        let x = ScoreVector::new(values.clone()).expect("finite");
        let order = oracle_ranking(&values);
        let k = rng.gen_range(1..n);
        let pair = select_rank_pair(&x, k).expect("valid k");
        let mut failures = 0usize;
        if pair.kth_index != order[k - 1] || pair.kplus1_index != order[k] {
            failures += 1;
        }
        let mask = hard_topk(&x, k).expect("valid k");
        for (rank, &i) in order.iter().enumerate() {
            let want = u8::from(rank < k);
            if mask[i] != want {
                failures += 1;
            }
        }
        Outcome::violation(0.0, 0.0, failures)
    })
}

fn check_monotonicity(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "forward_monotonicity";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let n = N_GRID[(idx as usize) % N_GRID.len()];
        let tau = TAU_GRID[(idx as usize / N_GRID.len()) % TAU_GRID.len()];
        // Tie-heavy half, separated half; both must be monotone.
        let values: Vec<f64> = if idx % 2 == 0 {
            (0..n)
                .map(|_| f64::from(rng.gen_range(-3i8..4)) * tau)
                .collect()
        } else {
            sample_separated(&mut rng, n, MIN_UNIT_GAP)
                .into_iter()
                .map(|v| v * tau)
                .collect()
        };
        let x = ScoreVector::new(values.clone()).expect("finite");
        let k = rng.gen_range(1..n);
        let cfg = TopKConfig::new(k, tau).expect("valid");
        let (mask, _) = dftopk_forward(&x, &cfg).expect("forward");
        let order = oracle_ranking(&values);
        let mut worst = 0.0f64;
        let mut failures = 0usize;
        for w in order.windows(2) {
            let (hi, lo) = (w[0], w[1]);
            if mask[hi] < mask[lo] {
                failures += 1;
                worst = worst.max(mask[lo] - mask[hi]);
            }
            if values[hi] == values[lo] && mask[hi] != mask[lo] {
                failures += 1;
            }
        }
        Outcome::violation(worst, worst, failures)
    })
}

/// Snap to the 2^-20 grid, where sums with like-snapped shifts are exact.
fn snap(v: f64) -> f64 {
    (v * 1_048_576.0).round() / 1_048_576.0
}

fn check_translation(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "forward_translation_invariance";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let inst = operator_instance(seed, salt, idx);
        let tau = inst.cfg.tau();
        let exact_branch = tau < 0.1 || rng.gen_bool(0.5);
        if exact_branch {
            // Exactly representable scores and shift: the mask must be
            // bit-for-bit unchanged. (The snapped grid is coarse enough
            // that no instance gaps collapse.)
            let snapped: Vec<f64> = inst.x.iter().map(|&v| snap(v)).collect();
            let c = snap(rng.gen_range(-1e6..1e6));
            let base = ScoreVector::new(snapped.clone()).expect("finite");
            let moved = ScoreVector::new(snapped.iter().map(|v| v + c).collect()).expect("finite");
            let (a, _) = dftopk_forward(&base, &inst.cfg).expect("forward");
            let (b, _) = dftopk_forward(&moved, &inst.cfg).expect("forward");
            let mut failures = 0usize;
            let mut worst = 0.0f64;
            for (&pa, &pb) in a.iter().zip(b.iter()) {
                if pa.to_bits() != pb.to_bits() {
                    failures += 1;
                    worst = worst.max((pa - pb).abs());
                }
            }
            Outcome::violation(worst, worst, failures)
        } else {
            // Arbitrary shift: per-entry tolerance 1e-9. Only meaningful
            // at moderate temperature — below it, rounding x + c on entry
            // already moves the mask by more than the tolerance, for any
            // implementation of the operator.
            let c = rng.gen_range(-1e6..1e6);
            let moved = ScoreVector::new(inst.x.iter().map(|v| v + c).collect()).expect("finite");
            let (a, _) = dftopk_forward(&inst.x, &inst.cfg).expect("forward");
            let (b, _) = dftopk_forward(&moved, &inst.cfg).expect("forward");
            let mut failures = 0usize;
            let mut worst = 0.0f64;
            for (&pa, &pb) in a.iter().zip(b.iter()) {
                let diff = (pa - pb).abs();
                worst = worst.max(diff);
                if diff > TRANSLATION_ABS_TOL {
                    failures += 1;
                }
            }
            Outcome::violation(worst / TRANSLATION_ABS_TOL, worst, failures)
        }
    })
}

fn check_scaling(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "forward_scaling_selection";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let inst = operator_instance(seed, salt, idx);
        let scale = [1e-6, 0.25, 3.0, 1e6][rng.gen_range(0..4)];
        let scaled = ScoreVector::new(inst.x.iter().map(|v| v * scale).collect()).expect("finite");
        let a = select_rank_pair(&inst.x, inst.cfg.k()).expect("valid");
        let b = select_rank_pair(&scaled, inst.cfg.k()).expect("valid");
        let failures = usize::from(a.kth_index != b.kth_index || a.kplus1_index != b.kplus1_index);
        Outcome::violation(0.0, 0.0, failures)
    })
}

fn check_approximation(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "forward_approximation_bound";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = operator_instance(seed, salt, idx);
        let k = inst.cfg.k();
        let pair = select_rank_pair(&inst.x, k).expect("valid");
        let gap = pair.kth_value - pair.kplus1_value;
        debug_assert!(gap > 0.0, "separated sampling guarantees a positive gap");
        let cfg = TopKConfig::new(k, gap / 100.0).expect("valid");
        let (mask, _) = dftopk_forward(&inst.x, &cfg).expect("forward");
        let hard = hard_topk(&inst.x, k).expect("valid");
        let mut worst = 0.0f64;
        let mut failures = 0usize;
        for (&p, &h) in mask.iter().zip(hard.iter()) {
            let dev = (p - f64::from(h)).abs();
            worst = worst.max(dev);
            if dev >= APPROX_BOUND {
                failures += 1;
            }
        }
        Outcome::violation(worst / APPROX_BOUND, worst, failures)
    })
}

fn check_complement(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "forward_boundary_complement";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = operator_instance(seed, salt, idx);
        let (mask, pair) = dftopk_forward(&inst.x, &inst.cfg).expect("forward");
        let total = mask[pair.kth_index] + mask[pair.kplus1_index];
        if total == 1.0 {
            Outcome::CLEAN
        } else {
            Outcome::violation((total - 1.0).abs(), (total - 1.0).abs(), 1)
        }
    })
}

fn check_loss_fd(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "loss_gradient_fd";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = operator_instance(seed, salt, idx);
        let analytic = dftopk_loss_backward(&inst.x, &inst.y, &inst.cfg).expect("backward");
        let numeric = central_difference(
            |v| {
                dftopk_loss(
                    &ScoreVector::new(v.to_vec()).expect("finite"),
                    &inst.y,
                    &inst.cfg,
                )
                .expect("loss")
            },
            &inst.x,
            FD_STEP,
        )
        .expect("instance gaps clear the FD guard by construction");
        let scale = dftopk_loss(&inst.x, &inst.y, &inst.cfg).expect("loss");
        fd_outcome(&analytic, &numeric, LOSS_GRAD_REL_TOL, scale)
    })
}

fn check_zero_sum(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "loss_gradient_zero_sum";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = operator_instance(seed, salt, idx);
        let g = dftopk_loss_backward(&inst.x, &inst.y, &inst.cfg).expect("backward");
        let total: f64 = g.iter().sum();
        let tol = ZERO_SUM_TOL_PER_ITEM * g.len() as f64;
        let abs = total.abs();
        Outcome::violation(abs / tol, abs, usize::from(abs > tol))
    })
}

fn check_vjp_fd(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "vjp_fd";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let inst = operator_instance(seed, salt, idx);
        let mut upstream: Vec<f64> = (0..inst.x.len())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        // Oppose the rank-boundary pair at full scale. The threshold
        // coupling is the operator's distinguishing direction and the one
        // a downstream loss always pulls (k-th up, (k+1)-th down); it also
        // pins the vector's norm, since rare draws otherwise zero every
        // coordinate at once and the relative comparison loses its scale.
        let pair = select_rank_pair(&inst.x, inst.cfg.k()).expect("valid k");
        upstream[pair.kth_index] = 1.5;
        upstream[pair.kplus1_index] = -1.5;
        let analytic = dftopk_vjp(&inst.x, &inst.cfg, &upstream).expect("vjp");
        let weighted = |v: &[f64]| -> f64 {
            let (mask, _) =
                dftopk_forward(&ScoreVector::new(v.to_vec()).expect("finite"), &inst.cfg)
                    .expect("forward");
            mask.iter().zip(upstream.iter()).map(|(p, u)| p * u).sum()
        };
        let numeric = central_difference(weighted, &inst.x, FD_STEP)
            .expect("instance gaps clear the FD guard by construction");
        let scale = weighted(&inst.x);
        fd_outcome(&analytic, &numeric, VJP_REL_TOL, scale)
    })
}

fn check_strict_residual(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "strict_threshold_residual";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = operator_instance(seed, salt, idx);
        let theta = strict_threshold(&inst.x, &inst.cfg, STRICT_EPS).expect("bisection");
        let tau = inst.cfg.tau();
        let total: f64 = inst
            .x
            .iter()
            .map(|&xi| 1.0 / (1.0 + (-(xi - theta) / tau).exp()))
            .sum();
        let residual = (total - inst.cfg.k() as f64).abs();
        Outcome::violation(
            residual / STRICT_EPS,
            residual,
            usize::from(residual > STRICT_EPS),
        )
    })
}

fn check_row_sums(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "permutation_row_sums";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = baseline_instance(seed, salt, idx);
        let mut worst = 0.0f64;
        let mut failures = 0usize;
        for p in [
            neuralsort_forward(&inst.x, inst.tau).expect("forward"),
            softsort_forward(&inst.x, inst.tau).expect("forward"),
        ] {
            for i in 0..p.n() {
                let row = p.row(i);
                let dev = (row.iter().sum::<f64>() - 1.0).abs();
                worst = worst.max(dev);
                if dev > ROW_SUM_TOL {
                    failures += 1;
                }
                if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    failures += 1;
                }
            }
        }
        Outcome::violation(worst / ROW_SUM_TOL, worst, failures)
    })
}

fn hard_permutation_rows(order: &[usize]) -> SoftPermutation {
    let n = order.len();
    let mut rows = vec![0.0; n * n];
    for (rank, &j) in order.iter().enumerate() {
        rows[rank * n + j] = 1.0;
    }
    SoftPermutation::new(n, rows).expect("exact permutation matrix")
}

fn check_hard_limit(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "permutation_hard_limit";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = baseline_instance(seed, salt, idx);
        let order = oracle_ranking(&inst.x);
        let hard = hard_permutation_rows(&order);
        let tau = min_adjacent_gap(&inst.x) / 100.0;
        let mut worst = 0.0f64;
        let mut failures = 0usize;
        for p in [
            neuralsort_forward(&inst.x, tau).expect("forward"),
            softsort_forward(&inst.x, tau).expect("forward"),
        ] {
            for i in 0..p.n() {
                for j in 0..p.n() {
                    let dev = (p.entry(i, j) - hard.entry(i, j)).abs();
                    worst = worst.max(dev);
                    if dev > HARD_LIMIT_TOL {
                        failures += 1;
                    }
                }
            }
        }
        Outcome::violation(worst / HARD_LIMIT_TOL, worst, failures)
    })
}

fn check_expected_topk_hard(seed: u64, instances: usize, threads: usize) -> GradCheckReport {
    let name = "expected_topk_hard_count";
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let mut rng = instance_rng(seed, salt, idx);
        let inst = baseline_instance(seed, salt, idx);
        let order = oracle_ranking(&inst.x);
        let hard = hard_permutation_rows(&order);
        let k = rng.gen_range(1..inst.x.len());
        let got = expected_topk(&hard, &inst.y, k).expect("valid");
        let want = order[..k]
            .iter()
            .map(|&j| f64::from(inst.y[j]))
            .sum::<f64>();
        if got == want {
            Outcome::CLEAN
        } else {
            Outcome::violation((got - want).abs(), (got - want).abs(), 1)
        }
    })
}

fn check_baseline_fd(
    seed: u64,
    instances: usize,
    threads: usize,
    kind: PermutationKind,
) -> GradCheckReport {
    let name = match kind {
        PermutationKind::NeuralSort => "neuralsort_gradient_fd",
        PermutationKind::SoftSort => "softsort_gradient_fd",
    };
    let salt = name_salt(name);
    run_check(name, instances, threads, &|idx| {
        let inst = baseline_instance(seed, salt, idx);
        let analytic =
            permutation_loss_backward(&inst.x, &inst.y, inst.k, inst.tau, kind).expect("backward");
        let numeric = central_difference(
            |v| {
                permutation_loss(
                    &ScoreVector::new(v.to_vec()).expect("finite"),
                    &inst.y,
                    inst.k,
                    inst.tau,
                    kind,
                )
                .expect("loss")
            },
            &inst.x,
            FD_STEP,
        )
        .expect("instance gaps clear the FD guard by construction");
        let scale = permutation_loss(&inst.x, &inst.y, inst.k, inst.tau, kind).expect("loss");
        fd_outcome(&analytic, &numeric, BASELINE_GRAD_REL_TOL, scale)
    })
}

/// Run every library invariant over `instances` seeded instances per
/// check. Deterministic: the same seed and instance count produce
/// identical reports, regardless of thread count.
pub fn run_property_suite(seed: u64, instances: usize) -> Vec<GradCheckReport> {
    run_property_suite_with(seed, instances, &SuiteOptions::default())
}

pub fn run_property_suite_with(
    seed: u64,
    instances: usize,
    opts: &SuiteOptions,
) -> Vec<GradCheckReport> {
    let instances = instances.max(1);
    let t = opts.threads.max(1);
    vec![
        check_select_oracle(seed, instances, t),
        check_monotonicity(seed, instances, t),
        check_translation(seed, instances, t),
        check_scaling(seed, instances, t),
        check_approximation(seed, instances, t),
        check_complement(seed, instances, t),
        check_loss_fd(seed, instances, t),
        check_zero_sum(seed, instances, t),
        check_vjp_fd(seed, instances, t),
        check_strict_residual(seed, instances, t),
        check_row_sums(seed, instances, t),
        check_hard_limit(seed, instances, t),
        check_expected_topk_hard(seed, instances, t),
        check_baseline_fd(seed, instances, t, PermutationKind::NeuralSort),
        check_baseline_fd(seed, instances, t, PermutationKind::SoftSort),
    ]
}
