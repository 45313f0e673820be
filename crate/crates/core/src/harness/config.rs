//! Flat `key = value` experiment configs.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line overrides use
//! the same keys (`--opt.layerwise=true`). Per-variant overrides for tables
//! are written `variant.<kind>.<key>` (applies to the plain and layerwise
//! variants of that optimizer) or `variant.ours-<kind>.<key>` (layerwise
//! variant only).
//!
//! | key | default |
//! |-----|---------|
//! | `dataset` | `blobs` (`mnist`, `cifar10`, `blobs`) |
//! | `dataset.dir` | `$LAYERLR_DATA_DIR/<dataset>`, else `data/<dataset>` |
//! | `dataset.train_limit`, `dataset.test_limit` | all samples |
//! | `blobs.n`, `blobs.test_n`, `blobs.classes`, `blobs.dim` | 1000, 200, 2, 2 |
//! | `blobs.seed`, `blobs.separation` | 0, 4.0 |
//! | `arch` | `mlp:2,16,2` |
//! | `opt.kind` | `sgd` (`momentum`, `nag`, `adagrad`) |
//! | `opt.layerwise` | `false` |
//! | `opt.mu` | 0.9 |
//! | `opt.weight_decay` | 0 |
//! | `opt.bias_separate` | `false` |
//! | `opt.epsilon_norm`, `opt.epsilon_div` | 1e-12 |
//! | `opt.baseline_t0` | unset; rate tuned for the plain optimizer |
//! | `sched.kind` | `constant` (`inverse-time`, `step-decay`) |
//! | `sched.t0` | 0.01 |
//! | `sched.gamma`, `sched.p` | 0, 1 |
//! | `sched.milestones`, `sched.factor` | none, 0.1 |
//! | `batch_size` | 64 |
//! | `max_iterations` | 1000 |
//! | `checkpoints` | `max_iterations` |
//! | `seeds` | `1` |
//! | `variants` | `opt.kind` with `opt.layerwise` |
//! | `metric` | `error` (`accuracy` for cifar10) |
//! | `eval_batch` | 500 |
//! | `output` | `results.csv` |
//!
//! For ImageNet-scale models trained with the layerwise rule, a base rate
//! somewhat below the plain optimizer's tuned value is a reasonable start,
//! since the multiplier never drops below 1.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::optim::{Hyperparams, LrSchedule, OptimizerKind};

pub const DATA_DIR_ENV: &str = "LAYERLR_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Mnist { dir: PathBuf },
    Cifar10 { dir: PathBuf },
    Blobs {
        n: usize,
        test_n: usize,
        classes: usize,
        dim: usize,
        seed: u64,
        separation: f64,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Mnist { .. } => "mnist",
            DatasetSpec::Cifar10 { .. } => "cifar10",
            DatasetSpec::Blobs { .. } => "blobs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ErrorPercent,
    AccuracyPercent,
}

/// An optimizer with or without the layer-specific rate, e.g. `ours-sgd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub kind: OptimizerKind,
    pub layerwise: bool,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.layerwise {
            write!(f, "ours-{}", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("ours-") {
            Some(kind) => Ok(Variant {
                kind: kind.parse()?,
                layerwise: true,
            }),
            None => Ok(Variant {
                kind: s.parse()?,
                layerwise: false,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub arch: Architecture,
    pub optimizer: OptimizerKind,
    pub layerwise: bool,
    pub hyperparams: Hyperparams,
    pub baseline_t0: Option<f64>,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub checkpoints: Vec<u64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub metric: Metric,
    pub eval_batch: usize,
    pub output: PathBuf,
    raw: BTreeMap<String, String>,
}

/// Parses `key = value` lines.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Parses `--key=value` (or `key=value`) override arguments.
pub fn parse_overrides<S: AsRef<str>>(args: &[S]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            let a = a.as_ref();
            let body = a.trim_start_matches('-');
            body.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override `{a}` is not of the form --key=value")))
        })
        .collect()
}

struct Keys<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Keys<'_> {
    fn str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "dataset.dir",
    "dataset.train_limit",
    "dataset.test_limit",
    "blobs.n",
    "blobs.test_n",
    "blobs.classes",
    "blobs.dim",
    "blobs.seed",
    "blobs.separation",
    "arch",
    "opt.kind",
    "opt.layerwise",
    "opt.mu",
    "opt.weight_decay",
    "opt.bias_separate",
    "opt.epsilon_norm",
    "opt.epsilon_div",
    "opt.baseline_t0",
    "sched.kind",
    "sched.t0",
    "sched.gamma",
    "sched.p",
    "sched.milestones",
    "sched.factor",
    "batch_size",
    "max_iterations",
    "checkpoints",
    "seeds",
    "variants",
    "metric",
    "eval_batch",
    "output",
];

fn default_data_dir(name: &str) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) => PathBuf::from(root).join(name),
        None => PathBuf::from("data").join(name),
    }
}

impl ExperimentConfig {
    pub fn from_pairs(map: BTreeMap<String, String>) -> Result<Self> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) && !key.starts_with("variant.") {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let k = Keys { map: &map };
        let dataset_name = k.str("dataset").unwrap_or("blobs");
        let dir = k
            .str("dataset.dir")
            .map(PathBuf::from)
            .unwrap_or_else(|| default_data_dir(dataset_name));
        let dataset = match dataset_name {
            "mnist" => DatasetSpec::Mnist { dir },
            "cifar10" | "cifar" => DatasetSpec::Cifar10 { dir },
            "blobs" => DatasetSpec::Blobs {
                n: k.parse("blobs.n", 1000)?,
                test_n: k.parse("blobs.test_n", 200)?,
                classes: k.parse("blobs.classes", 2)?,
                dim: k.parse("blobs.dim", 2)?,
                seed: k.parse("blobs.seed", 0)?,
                separation: k.parse("blobs.separation", crate::data::DEFAULT_SEPARATION)?,
            },
            other => return Err(Error::Config(format!("unknown dataset `{other}`"))),
        };
        let arch: Architecture = k.str("arch").unwrap_or("mlp:2,16,2").parse()?;
        let optimizer: OptimizerKind = k.str("opt.kind").unwrap_or("sgd").parse()?;
        let layerwise = k.parse("opt.layerwise", false)?;
        let d = Hyperparams::default();
        let hyperparams = Hyperparams {
            mu: k.parse("opt.mu", d.mu)?,
            weight_decay: k.parse("opt.weight_decay", d.weight_decay)?,
            epsilon_norm: k.parse("opt.epsilon_norm", d.epsilon_norm)?,
            epsilon_div: k.parse("opt.epsilon_div", d.epsilon_div)?,
            bias_separate: k.parse("opt.bias_separate", d.bias_separate)?,
        };
        let t0 = k.parse("sched.t0", 0.01)?;
        let schedule = match k.str("sched.kind").unwrap_or("constant") {
            "constant" => LrSchedule::Constant { t0 },
            "inverse-time" | "inv" => LrSchedule::InverseTime {
                t0,
                gamma: k.parse("sched.gamma", 0.0)?,
                power: k.parse("sched.p", 1.0)?,
            },
            "step-decay" | "step" => LrSchedule::StepDecay {
                t0,
                milestones: k.list("sched.milestones")?.unwrap_or_default(),
                factor: k.parse("sched.factor", 0.1)?,
            },
            other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
        };
        schedule.validate()?;
        let max_iterations: u64 = k.parse("max_iterations", 1000)?;
        let checkpoints = k.list("checkpoints")?.unwrap_or_else(|| vec![max_iterations]);
        let seeds = k.list("seeds")?.unwrap_or_else(|| vec![1]);
        let variants = match k.list::<Variant>("variants")? {
            Some(v) if !v.is_empty() => v,
            _ => vec![Variant {
                kind: optimizer,
                layerwise,
            }],
        };
        let metric = match k.str("metric") {
            Some("error") => Metric::ErrorPercent,
            Some("accuracy") => Metric::AccuracyPercent,
            Some(other) => return Err(Error::Config(format!("unknown metric `{other}`"))),
            None if matches!(dataset, DatasetSpec::Cifar10 { .. }) => Metric::AccuracyPercent,
            None => Metric::ErrorPercent,
        };
        let cfg = ExperimentConfig {
            dataset,
            train_limit: k.opt("dataset.train_limit")?,
            test_limit: k.opt("dataset.test_limit")?,
            arch,
            optimizer,
            layerwise,
            hyperparams,
            baseline_t0: k.opt("opt.baseline_t0")?,
            schedule,
            batch_size: k.parse("batch_size", 64)?,
            max_iterations,
            checkpoints,
            seeds,
            variants,
            metric,
            eval_batch: k.parse("eval_batch", 500)?,
            output: PathBuf::from(k.str("output").unwrap_or("results.csv")),
            raw: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    /// Reads a config file and applies `--key=value` overrides.
    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut map = parse_pairs(&text)?;
        for (k, v) in parse_overrides(overrides)? {
            map.insert(k, v);
        }
        Self::from_pairs(map)
    }

    /// Same config with extra key overrides.
    pub fn with_overrides(&self, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut map = self.raw.clone();
        for (k, v) in pairs {
            map.insert((*k).to_string(), (*v).to_string());
        }
        Self::from_pairs(map)
    }

    /// Config for one table variant: its optimizer settings plus any
    /// `variant.*` overrides.
    pub fn for_variant(&self, variant: Variant) -> Result<Self> {
        let mut map = self.raw.clone();
        let prefixes = if variant.layerwise {
            vec![format!("variant.{}.", variant.kind), format!("variant.{variant}.")]
        } else {
            vec![format!("variant.{}.", variant.kind)]
        };
        for prefix in &prefixes {
            let extra: Vec<(String, String)> = self
                .raw
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix.as_str()).map(|rest| (rest.to_string(), v.clone())))
                .collect();
            map.extend(extra);
        }
        map.insert("opt.kind".into(), variant.kind.name().into());
        map.insert("opt.layerwise".into(), variant.layerwise.to_string());
        map.insert("variants".into(), variant.to_string());
        Self::from_pairs(map)
    }

    pub fn raw(&self) -> &BTreeMap<String, String> {
        &self.raw
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Config("at least one checkpoint is required".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("checkpoints must be strictly increasing: {:?}", self.checkpoints)));
        }
        if self.checkpoints[0] < 1 || *self.checkpoints.last().unwrap() > self.max_iterations {
            return Err(Error::Config(format!(
                "checkpoints {:?} must lie in [1, {}]",
                self.checkpoints, self.max_iterations
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("seeds must be distinct: {:?}", self.seeds)));
        }
        crate::optim::make_optimizer(self.optimizer, self.hyperparams, self.layerwise)?;
        Ok(())
    }

    /// Warning text when the layerwise rule runs at a rate tuned for the plain
    /// optimizer; the multiplier only ever raises the rate.
    pub fn baseline_rate_warning(&self) -> Option<String> {
        if !self.layerwise {
            return None;
        }
        let t0 = self.schedule.initial_rate();
        let baseline = self.baseline_t0.or(match self.arch {
            Architecture::LeNet => Some(0.01),
            Architecture::CifarQuick => Some(0.001),
            Architecture::Mlp { .. } => None,
        })?;
        (t0 == baseline).then(|| {
            format!(
                "layerwise rates are always >= the global rate; t0 = {t0} is the baseline-tuned value, \
                 consider a slightly smaller base rate"
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MNIST: &str = "
        # table 1 style
        dataset = mnist
        dataset.dir = /tmp/mnist
        arch = lenet
        opt.kind = sgd
        sched.kind = inverse-time
        sched.t0 = 0.01
        sched.gamma = 0.0001
        sched.p = 0.75
        batch_size = 64
        max_iterations = 1800
        checkpoints = 200, 600, 1000, 1400, 1800
        seeds = 1,2,3
        variants = sgd, ours-sgd, adagrad, ours-adagrad
        variant.adagrad.sched.kind = constant
        variant.ours-adagrad.opt.weight_decay = 0.001
    ";

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::parse_str(MNIST).unwrap();
        assert_eq!(cfg.dataset, DatasetSpec::Mnist { dir: "/tmp/mnist".into() });
        assert_eq!(cfg.arch, Architecture::LeNet);
        assert_eq!(cfg.checkpoints, vec![200, 600, 1000, 1400, 1800]);
        assert_eq!(cfg.variants.len(), 4);
        assert_eq!(cfg.variants[1].to_string(), "ours-sgd");
        assert_eq!(
            cfg.schedule,
            LrSchedule::InverseTime {
                t0: 0.01,
                gamma: 1e-4,
                power: 0.75
            }
        );
        assert_eq!(cfg.metric, Metric::ErrorPercent);
    }

    #[test]
    fn variant_overrides() {
        let cfg = ExperimentConfig::parse_str(MNIST).unwrap();
        let plain = cfg.for_variant("adagrad".parse().unwrap()).unwrap();
        assert_eq!(plain.optimizer, OptimizerKind::Adagrad);
        assert!(!plain.layerwise);
        assert_eq!(plain.schedule, LrSchedule::Constant { t0: 0.01 });
        assert_eq!(plain.hyperparams.weight_decay, 0.0);
        let ours = cfg.for_variant("ours-adagrad".parse().unwrap()).unwrap();
        assert!(ours.layerwise);
        assert_eq!(ours.schedule, LrSchedule::Constant { t0: 0.01 });
        assert_eq!(ours.hyperparams.weight_decay, 0.001);
        let sgd = cfg.for_variant("ours-sgd".parse().unwrap()).unwrap();
        assert!(matches!(sgd.schedule, LrSchedule::InverseTime { .. }));
    }

    #[test]
    fn overrides_parse() {
        let o = parse_overrides(&["--opt.layerwise=true", "sched.t0=0.5"]).unwrap();
        assert_eq!(o[0], ("opt.layerwise".to_string(), "true".to_string()));
        assert_eq!(o[1].1, "0.5");
        assert!(parse_overrides(&["--oops"]).is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            "checkpoints = 0",
            "max_iterations = 10\ncheckpoints = 20",
            "checkpoints = 5, 5",
            "seeds = 1, 1",
            "seeds =",
            "opt.kind = nag\nopt.mu = 1.5",
            "sched.t0 = -1",
            "arch = alexnet",
            "colour = blue",
            "just text",
        ];
        for text in bad {
            let err = ExperimentConfig::parse_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn warning_for_baseline_rate() {
        let cfg = ExperimentConfig::parse_str("arch = lenet\nopt.layerwise = true\nsched.t0 = 0.01").unwrap();
        assert!(cfg.baseline_rate_warning().is_some());
        let cfg = ExperimentConfig::parse_str("arch = lenet\nopt.layerwise = true\nsched.t0 = 0.006").unwrap();
        assert!(cfg.baseline_rate_warning().is_none());
        let cfg = ExperimentConfig::parse_str("opt.layerwise = true\nopt.baseline_t0 = 0.01").unwrap();
        assert!(cfg.baseline_rate_warning().is_some());
    }

    #[test]
    fn cifar_defaults_to_accuracy() {
        let cfg = ExperimentConfig::parse_str("dataset = cifar10\narch = cifar-quick").unwrap();
        assert_eq!(cfg.metric, Metric::AccuracyPercent);
    }
}
