//! Experiment configuration: one TOML file per experiment, layered over a
//! per-subcommand preset, with command-line flags applied last.

use std::path::{Path, PathBuf};

use chunklab::data::{gaussian_blobs, read_csv, read_idx, LabeledDataset, StreamMode};
use chunklab::experiment::{parse_averager, Benchmark, ModelSpec};
use chunklab::averaging::AveragerMode;
use chunklab::linear_oracle::StudyConfig;
use chunklab::model::Activation;
use chunklab::trainer::{Method, Regime, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ChunkCurve,
    WaCompare,
    Forgetting,
    Stability,
    LinearStudy,
    ClCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Write every run's checkpoints and traces next to the CSVs.
    #[serde(default)]
    pub save_runs: bool,
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    pub stream: StreamConfig,
    pub train: TrainSection,
    pub averaging: AveragingConfig,
    pub linear: LinearSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        dim: usize,
        classes: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
    },
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    /// Chunking used by `chunk-curve`, `forgetting` and `stability`.
    pub mode: StreamMode,
    /// Chunk counts swept by `chunk-curve`; ignored when `chunk_sizes` is set.
    pub chunk_counts: Vec<usize>,
    #[serde(default)]
    pub chunk_sizes: Vec<usize>,
    /// Chunk count of a `forgetting` or `stability` run.
    pub n_chunks: usize,
    /// 1-based tracked chunks for `forgetting`; empty picks the 10/40/80% chunks.
    #[serde(default)]
    pub tracked: Vec<usize>,
    pub classes_per_task: usize,
    /// Stability window in update steps.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs_per_chunk: usize,
    /// When non-empty, `chunk-curve` repeats the sweep for every value.
    #[serde(default)]
    pub epochs_grid: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub methods: Vec<Method>,
    pub regimes: Vec<Regime>,
    pub memory_size: usize,
    pub replay_batch: usize,
    pub eval_every_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    /// `none`, `mean`, `ema:<alpha>`, or `both` (none and mean).
    pub averagers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    pub d: usize,
    pub chunk_sizes: Vec<usize>,
    pub k: usize,
    pub lambda_d: f64,
    pub noise_sd: f64,
    pub a_x: f64,
    pub alpha_sg: f64,
    pub delta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Chunk size, noise level and number of random chunk orders (besides
    /// the reverse) of the posterior invariance check.
    pub invariance_chunk_size: usize,
    pub invariance_noise_sd: f64,
    pub invariance_orders: usize,
}

impl Default for LinearSection {
    fn default() -> Self {
        let s = StudyConfig::default();
        Self {
            d: s.d,
            chunk_sizes: s.chunk_sizes,
            k: s.k,
            lambda_d: s.lambda_d,
            noise_sd: s.noise_sd,
            a_x: s.a_x,
            alpha_sg: s.alpha_sg,
            delta: s.delta,
            a1: s.a1,
            a2: s.a2,
            a3: s.a3,
            invariance_chunk_size: 40,
            invariance_noise_sd: 1.0,
            invariance_orders: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            seeds: (0..5).collect(),
            save_runs: false,
            dataset: DatasetConfig::Blobs {
                dim: 2,
                classes: 4,
                per_class: 1000,
                separation: 4.0,
                seed: 0,
                test_per_class: None,
            },
            model: ModelSection { hidden: vec![32], activation: Activation::Relu },
            stream: StreamConfig {
                mode: StreamMode::IidBalanced,
                chunk_counts: vec![1, 2, 5, 10, 25, 50],
                chunk_sizes: Vec::new(),
                n_chunks: 50,
                tracked: Vec::new(),
                classes_per_task: 2,
                window: 50,
            },
            train: TrainSection {
                epochs_per_chunk: 200,
                epochs_grid: Vec::new(),
                batch_size: 32,
                lr: 0.1,
                methods: vec![Method::PlainSgd],
                regimes: vec![Regime::Standard],
                memory_size: 100,
                replay_batch: 32,
                eval_every_steps: 0,
            },
            averaging: AveragingConfig { averagers: vec!["none".into()] },
            linear: LinearSection::default(),
        };
        match preset {
            Preset::ChunkCurve => {}
            Preset::WaCompare => {
                cfg.averaging.averagers = vec!["both".into(), "ema:0.8".into(), "ema:0.95".into()];
            }
            Preset::Forgetting => {
                cfg.seeds = (0..3).collect();
                cfg.model.hidden = vec![64];
                cfg.train.epochs_per_chunk = 5000;
                cfg.averaging.averagers = vec!["both".into()];
            }
            Preset::Stability => {
                cfg.seeds = (0..3).collect();
                cfg.stream.n_chunks = 10;
                cfg.train.eval_every_steps = 10;
                cfg.train.methods = vec![Method::PlainSgd, Method::Er];
            }
            Preset::LinearStudy => {
                cfg.seeds = (0..20).collect();
            }
            Preset::ClCompare => {
                cfg.seeds = (0..3).collect();
                cfg.dataset = DatasetConfig::Blobs {
                    dim: 200,
                    classes: 10,
                    per_class: 1000,
                    separation: 3.0,
                    seed: 0,
                    test_per_class: None,
                };
                cfg.stream.mode = StreamMode::ClassIncremental;
                cfg.train.epochs_per_chunk = 50;
                cfg.train.methods = vec![Method::PlainSgd, Method::Er];
                cfg.train.regimes = vec![Regime::Standard, Regime::Online];
                cfg.averaging.averagers = vec!["both".into()];
            }
        }
        cfg
    }

    /// The preset with the TOML document `text` layered on top. Tables merge
    /// key by key; a dataset table naming a different `source` replaces the
    /// preset's dataset entirely.
    pub fn from_toml_over(preset: Preset, text: &str) -> CliResult<Self> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::preset(preset)).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::preset(preset)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml_over(preset, &text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        match &self.dataset {
            DatasetConfig::Csv { path, .. } if !path.is_file() => {
                return bad(format!("dataset.path {} does not exist", path.display()));
            }
            DatasetConfig::Idx { images, labels, .. } => {
                for p in [images, labels] {
                    if !p.is_file() {
                        return bad(format!("dataset file {} does not exist", p.display()));
                    }
                }
            }
            _ => {}
        }
        if self.model.hidden.contains(&0) {
            return bad("model.hidden sizes must be >= 1".into());
        }
        if self.train.methods.is_empty() || self.train.regimes.is_empty() {
            return bad("train.methods and train.regimes must not be empty".into());
        }
        if self.averaging.averagers.is_empty() {
            return bad("averaging.averagers must not be empty".into());
        }
        self.averagers()?;
        for e in std::iter::once(self.train.epochs_per_chunk).chain(self.train.epochs_grid.iter().copied()) {
            self.train_config(Method::PlainSgd, Regime::Standard, e)
                .validate()
                .map_err(|err| CliError::Config(format!("train: {err}")))?;
        }
        if self.stream.n_chunks == 0 || self.stream.classes_per_task == 0 {
            return bad("stream.n_chunks and stream.classes_per_task must be >= 1".into());
        }
        if self.stream.tracked.contains(&0) {
            return bad("stream.tracked chunk numbers are 1-based".into());
        }
        if self.linear.chunk_sizes.is_empty() {
            return bad("linear.chunk_sizes must not be empty".into());
        }
        Ok(())
    }

    /// Averagers in configured order with `both` expanded and duplicates dropped.
    pub fn averagers(&self) -> CliResult<Vec<Option<AveragerMode>>> {
        let mut out: Vec<Option<AveragerMode>> = Vec::new();
        for name in &self.averaging.averagers {
            let parsed = if name == "both" {
                vec![None, Some(AveragerMode::Mean)]
            } else {
                vec![parse_averager(name).map_err(|e| CliError::Config(format!("averaging.averagers: {e}")))?]
            };
            for a in parsed {
                if !out.contains(&a) {
                    out.push(a);
                }
            }
        }
        Ok(out)
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec { hidden: self.model.hidden.clone(), activation: self.model.activation }
    }

    pub fn train_config(&self, method: Method, regime: Regime, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs_per_chunk: epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            method,
            memory_size: self.train.memory_size,
            replay_batch: self.train.replay_batch,
            eval_every_steps: self.train.eval_every_steps,
            regime,
            seed: 0,
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        let l = &self.linear;
        StudyConfig {
            d: l.d,
            chunk_sizes: l.chunk_sizes.clone(),
            k: l.k,
            seeds: self.seeds.clone(),
            lambda_d: l.lambda_d,
            noise_sd: l.noise_sd,
            a_x: l.a_x,
            alpha_sg: l.alpha_sg,
            delta: l.delta,
            a1: l.a1,
            a2: l.a2,
            a3: l.a3,
        }
    }

    /// Loads or generates the dataset and reserves the test split.
    pub fn benchmark(&self) -> CliResult<Benchmark> {
        let (dataset, test_per_class): (LabeledDataset, Option<usize>) = match &self.dataset {
            DatasetConfig::Blobs { dim, classes, per_class, separation, seed, test_per_class } => {
                (gaussian_blobs(*dim, *classes, *per_class, *separation, *seed)?, *test_per_class)
            }
            DatasetConfig::Csv { path, test_per_class } => (read_csv(path)?, *test_per_class),
            DatasetConfig::Idx { images, labels, test_per_class } => (read_idx(images, labels)?, *test_per_class),
        };
        Ok(Benchmark::new(&dataset, test_per_class, 0)?)
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let replaces = matches!((b.get("source"), o.get("source")), (Some(x), Some(y)) if x != y);
                if replaces {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
