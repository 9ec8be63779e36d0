//! Argument parsing, dispatch and exit-code policy.
//!
//! Exit codes: 0 on success, 1 for configuration or usage problems
//! (including unknown config keys and invalid values), 2 when a run
//! itself fails — gradient-check property failures or a training run
//! aborting on a non-finite loss.
//!
//! Precedence for settings: built-in defaults, then the `--config` file,
//! then `--set KEY=VALUE` overrides in order, then dedicated flags.
//! `sweep-tau` starts from the reduced sweep configuration instead of the
//! full-scale defaults, and owns `tau` itself (one run per `--taus` entry).

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use dftopk_core::cascade::TrainConfig;
use dftopk_core::{Error, Result};

use crate::bench;
use crate::config::RunConfig;
use crate::report;
use crate::runs;

#[derive(Debug, Parser)]
#[command(
    name = "dftopk",
    version,
    about = "Relaxed top-k toolkit: loss microbenchmarks, gradient checks, \
             cascade training runs and temperature sweeps",
    after_help = "Config files are flat `key = value` text; `#` starts a comment. \
                  Every command writes its CSV output under --out and mirrors it \
                  on stdout. All outputs except benchmark timings are \
                  byte-reproducible for a fixed config and seed."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value config file applied over the defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Single KEY=VALUE override, repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Directory for output files (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time loss forward+backward at K = N/2; writes bench.csv and
    /// bench_slopes.csv. With --reps 1 --warmup 0 rows are emitted but the
    /// log-log slope fit carries no guarantee.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list lengths (each >= 2).
        #[arg(long, value_delimiter = ',', value_name = "N,..")]
        sizes: Option<Vec<usize>>,
        /// Timed repetitions per cell.
        #[arg(long)]
        reps: Option<usize>,
        /// Discarded warm-up repetitions per cell.
        #[arg(long)]
        warmup: Option<usize>,
        /// Operators: dftopk, neuralsort, softsort, strict_bisect.
        #[arg(long, value_delimiter = ',', value_name = "OP,..")]
        ops: Option<Vec<String>>,
        /// Vectors per timed repetition (throughput mode when > 1).
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Run the finite-difference property suite; writes
    /// gradcheck_report.txt and gradcheck_report.csv. Exits 2 on any
    /// property failure.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Base seed for all checks.
        #[arg(long)]
        seed: Option<u64>,
        /// Instances per property (>= 1).
        #[arg(long)]
        instances: Option<usize>,
        /// Worker threads; capped by the DFTOPK_THREADS environment
        /// variable. Reports are identical for any thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Train on the streaming synthetic cascade; writes train_metrics.csv
    /// (one row per evaluated day) and model.bin.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// One training run per temperature on the reduced sweep
    /// configuration; writes sweep_tau.csv.
    #[command(name = "sweep-tau")]
    SweepTau {
        #[command(flatten)]
        common: Common,
        /// Comma-separated positive temperatures, one run each.
        #[arg(long, value_delimiter = ',', value_name = "TAU,..")]
        taus: Option<Vec<f64>>,
    },
}

/// Parses argv and runs; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonFiniteLoss { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Bench {
            common,
            sizes,
            reps,
            warmup,
            ops,
            batch,
        } => {
            let mut cfg = load_config(common, TrainConfig::default())?;
            if let Some(sizes) = sizes {
                cfg.sizes = sizes.clone();
            }
            if let Some(reps) = *reps {
                cfg.reps = reps;
            }
            if let Some(warmup) = *warmup {
                cfg.warmup = warmup;
            }
            if let Some(ops) = ops {
                cfg.ops = ops.iter().map(|s| s.parse()).collect::<Result<_>>()?;
            }
            if let Some(batch) = *batch {
                cfg.batch = batch;
            }
            let (rows, slopes) = bench::run_bench(&cfg)?;
            let rows_csv = bench::rows_csv(&rows);
            let slopes_csv = bench::slopes_csv(&slopes);
            write_output(&common.out, "bench.csv", &rows_csv)?;
            write_output(&common.out, "bench_slopes.csv", &slopes_csv)?;
            print!("{rows_csv}\n{slopes_csv}");
            Ok(0)
        }
        Command::Gradcheck {
            common,
            seed,
            instances,
            threads,
        } => {
            let mut cfg = load_config(common, TrainConfig::default())?;
            if let Some(seed) = *seed {
                cfg.train.seed = seed;
            }
            if let Some(instances) = *instances {
                cfg.instances = instances;
            }
            if let Some(threads) = *threads {
                cfg.threads = threads;
            }
            let out = report::run_gradcheck(cfg.train.seed, cfg.instances, cfg.threads)?;
            write_output(&common.out, "gradcheck_report.txt", &out.text)?;
            write_output(&common.out, "gradcheck_report.csv", &out.csv)?;
            print!("{}", out.text);
            Ok(if out.failures == 0 { 0 } else { 2 })
        }
        Command::Train { common } => {
            let cfg = load_config(common, TrainConfig::default())?;
            cfg.train.validate()?;
            let out = runs::run_train(&cfg.train)?;
            write_output(&common.out, "train_metrics.csv", &out.csv)?;
            out.model.save(&common.out.join("model.bin"))?;
            print!("{}", out.csv);
            Ok(0)
        }
        Command::SweepTau { common, taus } => {
            let mut cfg = load_config(common, TrainConfig::reduced_sweep(1.0))?;
            if let Some(taus) = taus {
                cfg.taus = taus.clone();
            }
            let csv = runs::run_sweep(&cfg)?;
            write_output(&common.out, "sweep_tau.csv", &csv)?;
            print!("{csv}");
            Ok(0)
        }
    }
}

fn load_config(common: &Common, base: TrainConfig) -> Result<RunConfig> {
    let mut cfg = RunConfig::with_train(base);
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for pair in &common.sets {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), content)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arguments_parse_for_every_subcommand() {
        Cli::try_parse_from([
            "dftopk",
            "bench",
            "--sizes",
            "5,10",
            "--reps",
            "3",
            "--warmup",
            "1",
            "--ops",
            "dftopk,softsort",
            "--batch",
            "2",
        ])
        .unwrap();
        Cli::try_parse_from(["dftopk", "gradcheck", "--seed", "0", "--instances", "1000"]).unwrap();
        Cli::try_parse_from(["dftopk", "train", "--set", "days=2", "--out", "/tmp/x"]).unwrap();
        Cli::try_parse_from(["dftopk", "sweep-tau", "--taus", "1e-4,1,1e4"]).unwrap();
        assert!(Cli::try_parse_from(["dftopk", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["dftopk"]).is_err());
    }
}
