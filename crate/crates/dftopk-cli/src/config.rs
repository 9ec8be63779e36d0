//! Flat key=value run configuration shared by every subcommand.
//!
//! One file format serves all commands: each line is `key = value`, `#`
//! starts a comment, blank lines are skipped, later assignments win.
//! The key set is the training configuration plus the benchmark, sweep
//! and gradient-check knobs; unknown keys are rejected by name, and every
//! value is validated before anything runs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use dftopk_core::cascade::TrainConfig;
use dftopk_core::{Error, Result};

/// Benchmark grid from the runtime-comparison tables.
pub const DEFAULT_SIZES: [usize; 6] = [5, 10, 50, 100, 500, 1000];

/// Temperature grid from the sensitivity study.
pub const DEFAULT_TAUS: [f64; 9] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1000.0, 1e4];

/// One timed loss implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    Dftopk,
    NeuralSort,
    SoftSort,
    StrictBisect,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [
        BenchOp::Dftopk,
        BenchOp::NeuralSort,
        BenchOp::SoftSort,
        BenchOp::StrictBisect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Dftopk => "dftopk",
            BenchOp::NeuralSort => "neuralsort",
            BenchOp::SoftSort => "softsort",
            BenchOp::StrictBisect => "strict_bisect",
        }
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dftopk" => Ok(BenchOp::Dftopk),
            "neuralsort" => Ok(BenchOp::NeuralSort),
            "softsort" => Ok(BenchOp::SoftSort),
            "strict_bisect" => Ok(BenchOp::StrictBisect),
            _ => Err(config_err(
                "ops",
                format!(
                    "unknown operator `{s}` (expected dftopk, neuralsort, softsort or strict_bisect)"
                ),
            )),
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a run can configure. Subcommands read their slice and
/// ignore the rest, so one config file can drive a whole experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Benchmark problem sizes (list lengths), each at least 2.
    pub sizes: Vec<usize>,
    /// Timed repetitions per benchmark cell.
    pub reps: usize,
    /// Discarded warm-up repetitions per benchmark cell.
    pub warmup: usize,
    /// Loss implementations to time.
    pub ops: Vec<BenchOp>,
    /// Vectors per timed repetition (1 = single-vector latency).
    pub batch: usize,
    /// Temperatures for the sweep command.
    pub taus: Vec<f64>,
    /// Instances per gradient-check property.
    pub instances: usize,
    /// Worker threads for the gradient check (capped by DFTOPK_THREADS).
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_train(TrainConfig::default())
    }
}

impl RunConfig {
    pub fn with_train(train: TrainConfig) -> Self {
        Self {
            train,
            sizes: DEFAULT_SIZES.to_vec(),
            reps: 200,
            warmup: 20,
            ops: BenchOp::ALL.to_vec(),
            batch: 1,
            taus: DEFAULT_TAUS.to_vec(),
            instances: 1000,
            threads: 1,
        }
    }

    /// Assigns one key. Unknown keys and unparseable values are rejected
    /// with the key name in the error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "loss_kind" => t.loss_kind = value.parse()?,
            "k_retrieval" => t.k_retrieval = parse(key, value)?,
            "k_ranking" => t.k_ranking = parse(key, value)?,
            "tau" => t.tau = parse(key, value)?,
            "baseline_tau" => t.baseline_tau = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_pvs" => t.batch_pvs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "days" => t.days = parse(key, value)?,
            "pvs_per_day" => t.pvs_per_day = parse(key, value)?,
            "base_candidates" => t.base_candidates = parse(key, value)?,
            "n_neg" => t.n_neg = parse(key, value)?,
            "k_pos" => t.k_pos = parse(key, value)?,
            "m_retrieval" => t.m_retrieval = parse(key, value)?,
            "m_ranking" => t.m_ranking = parse(key, value)?,
            "user_dim" => t.user_dim = parse(key, value)?,
            "item_dim" => t.item_dim = parse(key, value)?,
            "hidden_dim" => t.hidden_dim = parse(key, value)?,
            "embed_dim" => t.embed_dim = parse(key, value)?,
            "latent_dim" => t.latent_dim = parse(key, value)?,
            "noise" => t.noise = parse(key, value)?,
            "drift" => t.drift = parse(key, value)?,
            "sizes" => self.sizes = parse_list(key, value)?,
            "reps" => self.reps = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "ops" => self.ops = parse_list(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "taus" => self.taus = parse_list(key, value)?,
            "instances" => self.instances = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(config_err(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies every assignment in a config file, in order.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Applies config-file text: `key = value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(
                    "config",
                    format!("line {}: expected `key = value`, got `{line}`", index + 1),
                )
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` command-line override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| config_err("--set", format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(key.trim(), value.trim())
    }
}

pub(crate) fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: ParseItem>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|s| T::parse_item(key, s.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config_err(key, "list must not be empty"));
    }
    Ok(items)
}

/// Comma-list element parser that tags errors with the list's key.
pub(crate) trait ParseItem: Sized {
    fn parse_item(key: &str, s: &str) -> Result<Self>;
}

impl ParseItem for BenchOp {
    fn parse_item(_key: &str, s: &str) -> Result<Self> {
        s.parse()
    }
}

macro_rules! parse_item_via_fromstr {
    ($($t:ty),*) => {$(
        impl ParseItem for $t {
            fn parse_item(key: &str, s: &str) -> Result<Self> {
                parse(key, s)
            }
        }
    )*};
}

parse_item_via_fromstr!(usize, f64);

impl FromStr for RunConfig {
    type Err = Error;

    /// Parses config-file text (same rules as [`RunConfig::apply_file`]).
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dftopk_core::cascade::LossKind;

    #[test]
    fn parses_keys_comments_and_blank_lines() {
        let cfg: RunConfig = "\n\
            # a comment\n\
            days = 7        # trailing comment\n\
            loss_kind = softsort\n\
            tau=0.25\n\
            sizes = 5, 10, 50\n\
            ops = dftopk,strict_bisect\n\
            taus = 0.5,2\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.train.days, 7);
        assert_eq!(cfg.train.loss_kind, LossKind::SoftSort);
        assert_eq!(cfg.train.tau, 0.25);
        assert_eq!(cfg.sizes, vec![5, 10, 50]);
        assert_eq!(cfg.ops, vec![BenchOp::Dftopk, BenchOp::StrictBisect]);
        assert_eq!(cfg.taus, vec![0.5, 2.0]);
    }

    #[test]
    fn later_assignments_win() {
        let cfg: RunConfig = "days = 3\ndays = 9\n".parse().unwrap();
        assert_eq!(cfg.train.days, 9);
    }

    #[test]
    fn rejects_unknown_keys_by_name() {
        let err = "frobnicate = 1\n".parse::<RunConfig>().unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "frobnicate"));
    }

    #[test]
    fn rejects_unparseable_values_with_the_key() {
        for (line, key) in [
            ("days = soon", "days"),
            ("tau = warm", "tau"),
            ("sizes = 5,ten", "sizes"),
            ("ops = dftopk,quicksort", "ops"),
            ("days 7", "config"),
        ] {
            let err = line.parse::<RunConfig>().unwrap_err();
            assert!(
                matches!(err, Error::Config { key: ref k, .. } if k == key),
                "line `{line}` reported {err}"
            );
        }
    }

    #[test]
    fn set_pair_requires_an_equals_sign() {
        let mut cfg = RunConfig::default();
        cfg.set_pair("noise=0.5").unwrap();
        assert_eq!(cfg.train.noise, 0.5);
        let err = cfg.set_pair("noise").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "--set"));
    }

    #[test]
    fn empty_lists_are_rejected() {
        assert!("sizes = \n".parse::<RunConfig>().is_err());
    }

    #[test]
    fn operator_names_round_trip() {
        for op in BenchOp::ALL {
            assert_eq!(op.name().parse::<BenchOp>().unwrap(), op);
        }
    }
}
