//! Training and temperature-sweep runs behind `train` and `sweep-tau`.

use std::fmt::Write as _;

use dftopk_core::cascade::{
    streaming_evaluate, streaming_run, CascadeModel, DayMetrics, TrainConfig,
    DAY_METRICS_CSV_HEADER,
};
use dftopk_core::Result;

use crate::config::{config_err, RunConfig};

pub const SWEEP_CSV_HEADER: &str = "tau,joint_recall,sum_deviation_mean";

/// Day-metric CSV plus the final trained model.
#[derive(Debug)]
pub struct TrainOutput {
    pub csv: String,
    pub model: CascadeModel,
}

/// Runs the streaming protocol and renders the per-day CSV.
pub fn run_train(cfg: &TrainConfig) -> Result<TrainOutput> {
    let (rows, model) = streaming_run(cfg)?;
    Ok(TrainOutput {
        csv: day_metrics_csv(&rows),
        model,
    })
}

pub fn day_metrics_csv(rows: &[DayMetrics]) -> String {
    let mut out = String::from(DAY_METRICS_CSV_HEADER);
    for row in rows {
        out.push('\n');
        out.push_str(&row.csv_row());
    }
    out.push('\n');
    out
}

/// One full training run per temperature; each row reports the final
/// evaluation day's joint recall and the mean over evaluated days of the
/// relaxed mask's |sum - k| deviation. The temperature list comes from
/// `cfg.taus`; `cfg.train.tau` is overwritten per row.
pub fn run_sweep(cfg: &RunConfig) -> Result<String> {
    if cfg.taus.is_empty() {
        return Err(config_err("taus", "need at least one temperature"));
    }
    if let Some(&bad) = cfg.taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(config_err(
            "taus",
            format!("temperatures must be positive and finite, got {bad}"),
        ));
    }
    let mut out = String::from(SWEEP_CSV_HEADER);
    for &tau in &cfg.taus {
        let mut train = cfg.train.clone();
        train.tau = tau;
        let rows = streaming_evaluate(&train)?;
        let joint = rows.last().expect("days >= 2 yields rows").joint_recall;
        let dev = rows.iter().map(|r| r.sum_deviation).sum::<f64>() / rows.len() as f64;
        let _ = write!(out, "\n{tau},{joint:.6},{dev:.6}");
    }
    out.push('\n');
    Ok(out)
}
