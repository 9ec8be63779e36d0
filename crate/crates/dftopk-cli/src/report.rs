//! Gradient-check driver: property-suite reports plus two report-only
//! diagnostics (strict-threshold comparison and the soft-permutation
//! gradient-conflict number). Everything here is deterministic in the
//! seed, so reruns produce byte-identical reports.

use std::fmt::Write as _;

use dftopk_core::baselines::conflict_metric;
use dftopk_core::gradcheck::{run_property_suite_with, GradCheckReport, SuiteOptions};
use dftopk_core::operator::{dftopk_forward, strict_threshold, sum_deviation};
use dftopk_core::{LabelVector, Result, ScoreVector, TopKConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::config_err;

pub const GRADCHECK_CSV_HEADER: &str = "check,instances,max_rel_error,max_abs_error,failures";

/// Rendered reports plus the total failure count (nonzero means the
/// process should exit with the property-failure status).
#[derive(Debug, Clone)]
pub struct GradcheckOutput {
    pub text: String,
    pub csv: String,
    pub failures: usize,
}

/// Runs the full property suite. `threads` is clamped to at least 1 and
/// capped by the `DFTOPK_THREADS` environment variable when set.
pub fn run_gradcheck(seed: u64, instances: usize, threads: usize) -> Result<GradcheckOutput> {
    if instances == 0 {
        return Err(config_err(
            "instances",
            "need at least one instance per check",
        ));
    }
    let threads = effective_threads(threads)?;
    let reports = run_property_suite_with(seed, instances, &SuiteOptions { threads });
    let failures = reports.iter().map(|r| r.failures).sum();
    Ok(GradcheckOutput {
        text: render_text(seed, instances, threads, &reports),
        csv: render_csv(&reports),
        failures,
    })
}

fn effective_threads(requested: usize) -> Result<usize> {
    let requested = requested.max(1);
    match std::env::var("DFTOPK_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(requested),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(config_err("DFTOPK_THREADS", "not valid unicode"))
        }
        Ok(raw) => {
            let cap: usize = raw
                .parse()
                .map_err(|e| config_err("DFTOPK_THREADS", format!("cannot parse `{raw}`: {e}")))?;
            if cap == 0 {
                return Err(config_err("DFTOPK_THREADS", "cap must be at least 1"));
            }
            Ok(requested.min(cap))
        }
    }
}

fn render_csv(reports: &[GradCheckReport]) -> String {
    let mut out = String::from(GRADCHECK_CSV_HEADER);
    for r in reports {
        let _ = write!(
            out,
            "\n{},{},{:e},{:e},{}",
            r.op_name, r.instances, r.max_rel_error, r.max_abs_error, r.failures
        );
    }
    out.push('\n');
    out
}

fn render_text(seed: u64, instances: usize, threads: usize, reports: &[GradCheckReport]) -> String {
    let mut out = format!(
        "gradient check: seed {seed}, {instances} instances per check, {threads} thread(s)\n\n"
    );
    let _ = writeln!(
        out,
        "{:<34} {:>9} {:>13} {:>13} {:>9}  status",
        "check", "instances", "max_rel_err", "max_abs_err", "failures"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<34} {:>9} {:>13.3e} {:>13.3e} {:>9}  {}",
            r.op_name,
            r.instances,
            r.max_rel_error,
            r.max_abs_error,
            r.failures,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    let total: usize = reports.iter().map(|r| r.failures).sum();
    let _ = writeln!(out, "\n{} checks, {total} failure(s)", reports.len());
    out.push_str(&diagnostics(seed));
    out
}

/// Report-only illustrations; no tolerances, no pass/fail.
fn diagnostics(seed: u64) -> String {
    let mut out = String::from("\ndiagnostics (report-only, no tolerances)\n");

    // How far the closed-form midpoint threshold sits from the strict
    // sum-to-k solution on a generic dense instance.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(*b"diag-thr"));
    let x = normal_scores(&mut rng, 100);
    let top = TopKConfig::new(30, 1.0).expect("static config");
    let theta_strict = strict_threshold(&x, &top, 1e-10).expect("bracketed root");
    let (mask, pair) = dftopk_forward(&x, &top).expect("valid input");
    let _ = writeln!(
        out,
        "  strict sum-to-k threshold vs midpoint (n=100, k=30, tau=1):\n    \
         theta_strict={theta_strict:.6e}  theta_midpoint={:.6e}  difference={:.3e}\n    \
         mask sum deviation from k at the midpoint: {:.3e}",
        pair.theta(),
        (theta_strict - pair.theta()).abs(),
        sum_deviation(&mask, top.k()),
    );

    // Soft-permutation gradient conflict: fraction of positive pairs whose
    // per-row derivatives oppose each other under softmax normalisation.
    // The rank-pair operator has no such cross term away from the boundary.
    rng.set_stream(u64::from_le_bytes(*b"diag-cfl"));
    let x = normal_scores(&mut rng, 20);
    let mut labels = vec![0u8; 20];
    for i in rand::seq::index::sample(&mut rng, 20, 5) {
        labels[i] = 1;
    }
    let y = LabelVector::new(labels).expect("binary labels");
    let _ = writeln!(
        out,
        "  neuralsort gradient conflict, opposing positive-pair fraction (n=20, K=5, 5 positives):"
    );
    for tau in [0.1, 1.0, 10.0] {
        let value = conflict_metric(&x, &y, 5, tau).expect("two or more positives");
        let _ = writeln!(out, "    tau={tau:<4} -> {value:.6}");
    }
    out
}

fn normal_scores(rng: &mut ChaCha20Rng, n: usize) -> ScoreVector {
    let values: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    ScoreVector::new(values).expect("normal draws are finite")
}
