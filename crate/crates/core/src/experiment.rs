//! Sweep protocols shared by the command-line runner and the browser demo.
//!
//! Each function runs one independent cell; callers decide how to schedule
//! cells. Per-run randomness (stream construction, initialization and
//! mini-batch order) is derived from the run seed, while the dataset and
//! its train/test split stay fixed across seeds.

use serde::{Deserialize, Serialize};

use crate::averaging::{running_averages, AveragerMode};
use crate::data::{
    build_balanced_stream, build_task_stream, build_unbalanced_stream, split_train_test, ChunkStream,
    LabeledDataset,
};
use crate::error::{Error, Result};
use crate::metrics::{stability_gap, StabilityDip, StabilityTrace};
use crate::model::{mlp_init, Activation, MlpConfig, ParamVector};
use crate::rng::derive_seed;
use crate::trainer::{evaluate_all, train_on_stream, Method, Regime, RunLog, TrainConfig};

/// Dataset after reserving a class-balanced test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Benchmark {
    /// `per_class_test = None` reserves 20% of the smallest class.
    pub fn new(dataset: &LabeledDataset, per_class_test: Option<usize>, seed: u64) -> Result<Self> {
        let per_class = per_class_test.unwrap_or_else(|| {
            dataset.class_counts().into_iter().min().unwrap_or(0) / 5
        });
        let (train, test) = split_train_test(dataset, per_class, seed)?;
        Ok(Self { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![32], activation: Activation::Relu }
    }
}

impl ModelSpec {
    pub fn config(&self, input: usize, classes: usize) -> Result<MlpConfig> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(classes);
        MlpConfig::new(sizes, self.activation)
    }
}

/// How the training set is cut into chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Chunking {
    /// Class-balanced i.i.d. chunks of a fixed size.
    IidBalanced { chunk_size: usize },
    /// Random near-equal slices with no class balancing.
    IidUnbalanced { n_chunks: usize },
    /// One task per group of consecutive classes.
    ClassIncremental { classes_per_task: usize },
}

impl Chunking {
    pub fn build(&self, train: &LabeledDataset, seed: u64) -> Result<ChunkStream> {
        match *self {
            Chunking::IidBalanced { chunk_size } => build_balanced_stream(train, chunk_size, seed),
            Chunking::IidUnbalanced { n_chunks } => build_unbalanced_stream(train, n_chunks, seed),
            Chunking::ClassIncremental { classes_per_task } => build_task_stream(train, classes_per_task, seed),
        }
    }

    /// Balanced chunking into `n_chunks` chunks of the training set.
    pub fn balanced_count(train: &LabeledDataset, n_chunks: usize) -> Result<Self> {
        if n_chunks == 0 || train.len() % n_chunks != 0 {
            return Err(Error::invalid(format!(
                "{} training examples do not split into {n_chunks} equal chunks",
                train.len()
            )));
        }
        Ok(Chunking::IidBalanced { chunk_size: train.len() / n_chunks })
    }
}

/// One completed training run.
#[derive(Debug, Clone)]
pub struct Run {
    pub stream: ChunkStream,
    pub config: MlpConfig,
    pub init: ParamVector,
    pub log: RunLog,
}

impl Run {
    /// Weights used for evaluation: final checkpoint, or the average over
    /// all checkpoints.
    pub fn eval_weights(&self, averager: Option<AveragerMode>) -> Result<ParamVector> {
        match averager {
            None => self.log.checkpoints.last().cloned().ok_or(Error::NoUpdates),
            Some(mode) => running_averages(mode, &self.log.checkpoints)?.pop().ok_or(Error::NoUpdates),
        }
    }

    pub fn test_accuracy(&self, bench: &Benchmark, averager: Option<AveragerMode>) -> Result<f64> {
        evaluate_all(&self.eval_weights(averager)?, &self.config, &bench.test)
    }

    /// Mean loss on the last epoch of every chunk is no larger than on its
    /// first epoch.
    pub fn loss_converges_per_chunk(&self, epochs: usize) -> bool {
        (0..self.stream.len()).all(|c| {
            let e = self.log.epoch_losses(c, epochs);
            e.last() <= e.first()
        })
    }
}

/// Trains one model on one stream. Seeds for the stream, the initial
/// weights and the batch order are all derived from `seed`.
pub fn run_cell(
    bench: &Benchmark,
    model: &ModelSpec,
    train: &TrainConfig,
    chunking: Chunking,
    seed: u64,
) -> Result<Run> {
    let stream = chunking.build(&bench.train, derive_seed(seed, 1))?;
    let config = model.config(bench.train.dim(), bench.train.class_count())?;
    let init = mlp_init(&config, derive_seed(seed, 2))?;
    let tc = TrainConfig { seed: derive_seed(seed, 3), ..train.clone() };
    let test = (!bench.test.is_empty()).then_some(&bench.test);
    let log = train_on_stream(&init, &config, &stream, &bench.train, test, &tc)?;
    Ok(Run { stream, config, init, log })
}

/// Label used in CSV outputs for an evaluation-weight choice.
pub fn averager_label(averager: Option<AveragerMode>) -> String {
    averager.map_or_else(|| "none".to_string(), |m| m.to_string())
}

/// Parses `none`, `mean` or `ema:<alpha>`.
pub fn parse_averager(s: &str) -> Result<Option<AveragerMode>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkCurveRow {
    pub chunk_size: usize,
    pub seed: u64,
    pub method: Method,
    pub averager: String,
    pub final_test_acc: f64,
}

/// One training run evaluated with every requested averager. Rows report
/// the mean chunk size of the stream.
pub fn chunk_curve_cell(
    bench: &Benchmark,
    model: &ModelSpec,
    train: &TrainConfig,
    chunking: Chunking,
    seed: u64,
    averagers: &[Option<AveragerMode>],
) -> Result<Vec<ChunkCurveRow>> {
    let run = run_cell(bench, model, train, chunking, seed)?;
    let chunk_size = bench.train.len() / run.stream.len();
    averagers
        .iter()
        .map(|&a| {
            Ok(ChunkCurveRow {
                chunk_size,
                seed,
                method: train.method,
                averager: averager_label(a),
                final_test_acc: run.test_accuracy(bench, a)?,
            })
        })
        .collect()
}

/// Stability-gap measurement of one run.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub trace: StabilityTrace,
    pub dips: Vec<StabilityDip>,
}

pub fn stability_cell(
    bench: &Benchmark,
    model: &ModelSpec,
    train: &TrainConfig,
    n_chunks: usize,
    window: usize,
    seed: u64,
) -> Result<StabilityResult> {
    if train.eval_every_steps == 0 {
        return Err(Error::invalid("stability measurement needs eval_every_steps > 0"));
    }
    let chunking = Chunking::balanced_count(&bench.train, n_chunks)?;
    let run = run_cell(bench, model, train, chunking, seed)?;
    let trace = StabilityTrace::from_runlog(&run.log, window);
    let dips = stability_gap(&trace);
    Ok(StabilityResult { trace, dips })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClCompareRow {
    pub setting: Regime,
    pub method: Method,
    pub averager: String,
    pub seed: u64,
    pub final_acc: f64,
}

/// One class-incremental run per `(regime, method, seed)`, evaluated with
/// each averager. Returns the rows and the number of update steps taken.
pub fn cl_compare_cell(
    bench: &Benchmark,
    model: &ModelSpec,
    train: &TrainConfig,
    classes_per_task: usize,
    regime: Regime,
    method: Method,
    seed: u64,
    averagers: &[Option<AveragerMode>],
) -> Result<(Vec<ClCompareRow>, usize)> {
    let tc = TrainConfig { regime, method, ..train.clone() };
    let run = run_cell(bench, model, &tc, Chunking::ClassIncremental { classes_per_task }, seed)?;
    let rows = averagers
        .iter()
        .map(|&a| {
            Ok(ClCompareRow {
                setting: regime,
                method,
                averager: averager_label(a),
                seed,
                final_acc: run.test_accuracy(bench, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, run.log.step_losses.len()))
}
