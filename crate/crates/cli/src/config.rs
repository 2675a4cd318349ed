//! Configuration resolution: command-line flags override values from the
//! `--config` JSON file, which override built-in defaults.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::args::{DesignKind, GlobalArgs, MeasurementKind, StateKind, StrategyKind};
use crate::usage;

pub const OUT_DIR_ENV: &str = "SUDEST_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "sudest-out";

/// Copy counts given either as a single integer or a list.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    One(usize),
    Many(Vec<usize>),
}

impl Counts {
    pub fn into_vec(self) -> Vec<usize> {
        match self {
            Counts::One(n) => vec![n],
            Counts::Many(v) => v,
        }
    }
}

/// Keys accepted in a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub dense_cap: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub kind: Option<DesignKind>,
    pub d: Option<usize>,
    pub n: Option<Counts>,
    pub m: Option<usize>,
    pub state: Option<StateKind>,
    pub epsilon: Option<f64>,
    pub q: Option<f64>,
    pub repeats: Option<usize>,
    pub repetitions: Option<usize>,
    pub trials: Option<usize>,
    pub strategy: Option<StrategyKind>,
    pub measurement: Option<MeasurementKind>,
    pub tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn single_n(&self) -> anyhow::Result<Option<usize>> {
        match &self.n {
            None => Ok(None),
            Some(Counts::One(n)) => Ok(Some(*n)),
            Some(Counts::Many(v)) if v.len() == 1 => Ok(Some(v[0])),
            Some(Counts::Many(_)) => Err(usage("this command takes a single `n`")),
        }
    }
}

/// Settings shared by all commands after resolution.
#[derive(Debug, Clone, Serialize)]
pub struct Common {
    pub seed: u64,
    /// Whether the seed was drawn from entropy because 0 (or nothing) was given.
    pub seed_from_entropy: bool,
    pub threads: usize,
    pub dense_cap: usize,
    pub out_dir: PathBuf,
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_common(global: &GlobalArgs, file: &FileConfig) -> Common {
    let requested = pick(global.seed, file.seed, 0);
    let (seed, seed_from_entropy) = if requested == 0 {
        (rand::rng().random_range(1..=u64::MAX), true)
    } else {
        (requested, false)
    };
    let env_dir = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let out_dir = global
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .or(env_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let threads = pick(
        global.threads,
        file.threads,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    );
    Common {
        seed,
        seed_from_entropy,
        threads: threads.max(1),
        dense_cap: pick(global.dense_cap, file.dense_cap, sudest_core::dense::DEFAULT_DENSE_CAP),
        out_dir,
    }
}

pub fn require(cond: bool, msg: impl Into<String>) -> anyhow::Result<()> {
    if cond {
        Ok(())
    } else {
        Err(usage(msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        assert_eq!(pick(Some(3), Some(2), 1), 3);
        assert_eq!(pick(None, Some(2), 1), 2);
        assert_eq!(pick(None::<i32>, None, 1), 1);
    }

    #[test]
    fn file_config_accepts_single_or_list_n() {
        let a: FileConfig = serde_json::from_str(r#"{"n": 3}"#).unwrap();
        assert_eq!(a.n.unwrap().into_vec(), vec![3]);
        let b: FileConfig = serde_json::from_str(r#"{"n": [1, 2], "strategy": "two-step"}"#).unwrap();
        assert_eq!(b.n.clone().unwrap().into_vec(), vec![1, 2]);
        assert!(b.single_n().is_err());
        assert_eq!(b.strategy, Some(StrategyKind::TwoStep));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn zero_seed_draws_from_entropy() {
        let global = GlobalArgs {
            seed: Some(0),
            ..Default::default()
        };
        let c = resolve_common(&global, &FileConfig::default());
        assert!(c.seed_from_entropy);
        assert_ne!(c.seed, 0);
        let file: FileConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        let fixed = resolve_common(&GlobalArgs::default(), &file);
        assert_eq!(fixed.seed, 7);
        assert!(!fixed.seed_from_entropy);
    }
}
