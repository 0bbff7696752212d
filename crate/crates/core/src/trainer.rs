//! Chunked training loops and the experience-replay baseline.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{ChunkStream, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, predict_labels, write_pvec, MlpConfig, ParamVector};
use crate::rng::{seeded, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PlainSgd,
    Er,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PlainSgd => "plain-sgd",
            Method::Er => "er",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Several epochs over each chunk before moving on.
    Standard,
    /// One pass; every mini-batch updates the learner exactly once.
    Online,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Standard => "standard",
            Regime::Online => "online",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs_per_chunk: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub method: Method,
    pub memory_size: usize,
    pub replay_batch: usize,
    /// Test-accuracy cadence in update steps; 0 disables the trace.
    pub eval_every_steps: usize,
    pub regime: Regime,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_per_chunk: 50,
            batch_size: 32,
            lr: 0.1,
            method: Method::PlainSgd,
            memory_size: 100,
            replay_batch: 32,
            eval_every_steps: 0,
            regime: Regime::Standard,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Passes over each chunk actually performed.
    pub fn effective_epochs(&self) -> usize {
        match self.regime {
            Regime::Standard => self.epochs_per_chunk,
            Regime::Online => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.regime == Regime::Standard && self.epochs_per_chunk == 0 {
            return Err(Error::invalid("epochs_per_chunk must be at least 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if self.method == Method::Er && self.memory_size == 0 {
            return Err(Error::invalid("experience replay needs memory_size >= 1"));
        }
        if self.method == Method::Er && self.replay_batch == 0 {
            return Err(Error::invalid("experience replay needs replay_batch >= 1"));
        }
        Ok(())
    }

    /// Update steps a run over `stream` performs.
    pub fn expected_steps(&self, stream: &ChunkStream) -> usize {
        stream
            .chunks
            .iter()
            .map(|c| self.effective_epochs() * c.len().div_ceil(self.batch_size))
            .sum()
    }
}

/// Fixed-capacity memory filled by reservoir sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    origins: Vec<usize>,
    seen: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay buffer capacity must be at least 1"));
        }
        Ok(Self { capacity, dim, features: Vec::new(), labels: Vec::new(), origins: Vec::new(), seen: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Caller-supplied identifiers of the stored items (dataset row indices
    /// inside [`train_on_stream`]).
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.features[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Offers one item. Kept outright while the buffer has room, otherwise
    /// it replaces a uniform slot with probability `capacity / seen`.
    pub fn offer(&mut self, features: &[f64], label: usize, origin: usize, rng: &mut Rng) {
        debug_assert_eq!(features.len(), self.dim);
        self.seen += 1;
        if self.len() < self.capacity {
            self.features.extend_from_slice(features);
            self.labels.push(label);
            self.origins.push(origin);
            return;
        }
        let j = rng.random_range(0..self.seen);
        if j < self.capacity {
            self.features[j * self.dim..(j + 1) * self.dim].copy_from_slice(features);
            self.labels[j] = label;
            self.origins[j] = origin;
        }
    }

    /// `count` slots, without replacement when the buffer holds enough
    /// items and with replacement otherwise. Empty if the buffer is empty.
    pub fn sample_slots(&self, count: usize, rng: &mut Rng) -> Vec<usize> {
        let n = self.len();
        if n == 0 || count == 0 {
            return Vec::new();
        }
        if n >= count {
            rand::seq::index::sample(rng, n, count).into_vec()
        } else {
            (0..count).map(|_| rng.random_range(0..n)).collect()
        }
    }
}

pub fn reservoir_update(
    mut buffer: ReplayBuffer,
    features: &[f64],
    label: usize,
    origin: usize,
    rng: &mut Rng,
) -> ReplayBuffer {
    buffer.offer(features, label, origin, rng);
    buffer
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    /// Parameters at the end of each chunk.
    pub checkpoints: Vec<ParamVector>,
    /// Training loss of every update, in order.
    pub step_losses: Vec<f64>,
    /// `(steps completed, test accuracy)`.
    pub eval_trace: Vec<(usize, f64)>,
    /// Steps completed when each chunk starts.
    pub chunk_boundaries: Vec<usize>,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    chunks: usize,
    steps: usize,
    chunk_boundaries: &'a [usize],
    checkpoints: Vec<String>,
    loss_trace: &'static str,
    eval_trace: &'static str,
}

impl RunLog {
    /// Writes `run.json`, `checkpoint_<k>.pvec` (1-based), `losses.csv` and
    /// `eval.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let names: Vec<String> = (1..=self.checkpoints.len()).map(|k| format!("checkpoint_{k}.pvec")).collect();
        for (name, cp) in names.iter().zip(&self.checkpoints) {
            write_pvec(dir.join(name), cp)?;
        }
        let meta = RunMeta {
            chunks: self.checkpoints.len(),
            steps: self.step_losses.len(),
            chunk_boundaries: &self.chunk_boundaries,
            checkpoints: names,
            loss_trace: "losses.csv",
            eval_trace: "eval.csv",
        };
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        let mut losses = String::from("step,loss\n");
        for (s, l) in self.step_losses.iter().enumerate() {
            let _ = writeln!(losses, "{},{l}", s + 1);
        }
        std::fs::write(dir.join("losses.csv"), losses)?;
        let mut evals = String::from("step,test_acc\n");
        for (s, a) in &self.eval_trace {
            let _ = writeln!(evals, "{s},{a}");
        }
        std::fs::write(dir.join("eval.csv"), evals)?;
        Ok(())
    }

    /// Mean loss over each epoch of `chunk`, given the epochs per chunk.
    pub fn epoch_losses(&self, chunk: usize, epochs: usize) -> Vec<f64> {
        let start = self.chunk_boundaries[chunk];
        let end = self.chunk_boundaries.get(chunk + 1).copied().unwrap_or(self.step_losses.len());
        let per_epoch = (end - start) / epochs.max(1);
        self.step_losses[start..end]
            .chunks(per_epoch.max(1))
            .map(|e| e.iter().sum::<f64>() / e.len() as f64)
            .collect()
    }
}

/// Fraction of `subset` classified correctly (argmax, ties to lowest id).
pub fn evaluate(params: &ParamVector, config: &MlpConfig, subset: &[usize], dataset: &LabeledDataset) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty subset"));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    dataset.gather(subset, &mut x, &mut y);
    accuracy_on(params, config, &x, &y)
}

/// Accuracy over a whole dataset.
pub fn evaluate_all(params: &ParamVector, config: &MlpConfig, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    accuracy_on(params, config, dataset.features(), dataset.labels())
}

fn accuracy_on(params: &ParamVector, config: &MlpConfig, x: &[f64], y: &[usize]) -> Result<f64> {
    let pred = predict_labels(params, config, x, y.len())?;
    let correct = pred.iter().zip(y).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / y.len() as f64)
}

pub fn train_on_stream(
    init: &ParamVector,
    config: &MlpConfig,
    stream: &ChunkStream,
    dataset: &LabeledDataset,
    test: Option<&LabeledDataset>,
    tc: &TrainConfig,
) -> Result<RunLog> {
    train_on_stream_observed(init, config, stream, dataset, test, tc, |_, _, _| {})
}

/// [`train_on_stream`] calling `on_chunk_end(chunk, θ_chunk, buffer)` after
/// each chunk; the observer sees the checkpoint and the replay buffer (ER
/// only) but cannot alter training.
pub fn train_on_stream_observed(
    init: &ParamVector,
    config: &MlpConfig,
    stream: &ChunkStream,
    dataset: &LabeledDataset,
    test: Option<&LabeledDataset>,
    tc: &TrainConfig,
    mut on_chunk_end: impl FnMut(usize, &ParamVector, Option<&ReplayBuffer>),
) -> Result<RunLog> {
    tc.validate()?;
    config.validate()?;
    if dataset.dim() != config.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features vs model input",
            expected: config.input_dim(),
            got: dataset.dim(),
        });
    }
    if dataset.class_count() > config.output_dim() {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the model outputs {}",
            dataset.class_count(),
            config.output_dim()
        )));
    }
    for (c, chunk) in stream.chunks.iter().enumerate() {
        if chunk.is_empty() {
            return Err(Error::EmptyChunk(c));
        }
        if let Some(&bad) = chunk.iter().find(|&&i| i >= dataset.len()) {
            return Err(Error::invalid(format!("chunk {c} references row {bad} of {}", dataset.len())));
        }
    }
    if tc.eval_every_steps > 0 && test.is_none_or(LabeledDataset::is_empty) {
        return Err(Error::invalid("eval_every_steps > 0 needs a non-empty test set"));
    }

    let mut shuffle_rng = seeded(tc.seed, stream::SHUFFLE);
    let mut replay_rng = seeded(tc.seed, stream::REPLAY);
    let mut reservoir_rng = seeded(tc.seed, stream::RESERVOIR);
    let mut buffer = match tc.method {
        Method::Er => Some(ReplayBuffer::new(tc.memory_size, dataset.dim())?),
        Method::PlainSgd => None,
    };

    let mut params = init.clone();
    let mut log = RunLog {
        checkpoints: Vec::with_capacity(stream.len()),
        step_losses: Vec::with_capacity(tc.expected_steps(stream)),
        eval_trace: Vec::new(),
        chunk_boundaries: Vec::with_capacity(stream.len()),
    };
    let record_eval = |params: &ParamVector, step: usize, log: &mut RunLog| -> Result<()> {
        if let Some(test) = test.filter(|_| tc.eval_every_steps > 0) {
            log.eval_trace.push((step, evaluate_all(params, config, test)?));
        }
        Ok(())
    };
    record_eval(&params, 0, &mut log)?;

    let (mut bx, mut by) = (Vec::new(), Vec::new());
    let mut order = Vec::new();
    for (c, chunk) in stream.chunks.iter().enumerate() {
        log.chunk_boundaries.push(log.step_losses.len());
        order.clear();
        order.extend_from_slice(chunk);
        for _ in 0..tc.effective_epochs() {
            order.shuffle(&mut shuffle_rng);
            for batch in order.chunks(tc.batch_size) {
                dataset.gather(batch, &mut bx, &mut by);
                if let Some(buf) = buffer.as_ref() {
                    for slot in buf.sample_slots(tc.replay_batch, &mut replay_rng) {
                        bx.extend_from_slice(buf.row(slot));
                        by.push(buf.labels()[slot]);
                    }
                }
                let (loss, grad) = loss_and_grad(&params, config, &bx, &by)?;
                params.axpy(-tc.lr, &grad)?;
                log.step_losses.push(loss);
                if tc.regime == Regime::Online {
                    if let Some(buf) = buffer.as_mut() {
                        for &i in batch {
                            buf.offer(dataset.row(i), dataset.label(i), i, &mut reservoir_rng);
                        }
                    }
                }
                let step = log.step_losses.len();
                if tc.eval_every_steps > 0 && step % tc.eval_every_steps == 0 {
                    record_eval(&params, step, &mut log)?;
                }
            }
        }
        if tc.regime == Regime::Standard {
            if let Some(buf) = buffer.as_mut() {
                for &i in chunk {
                    buf.offer(dataset.row(i), dataset.label(i), i, &mut reservoir_rng);
                }
            }
        }
        on_chunk_end(c, &params, buffer.as_ref());
        log.checkpoints.push(params.clone());
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_balanced_stream, gaussian_blobs};
    use crate::model::{mlp_init, Activation};

    #[test]
    fn short_stream_is_kept_whole() {
        let mut rng = seeded(0, 99);
        let mut buf = ReplayBuffer::new(5, 1).unwrap();
        for i in 0..4 {
            buf.offer(&[i as f64], 0, i, &mut rng);
        }
        assert_eq!(buf.origins(), &[0, 1, 2, 3]);
        assert_eq!(buf.seen_count(), 4);
    }

    #[test]
    fn buffer_size_tracks_min_seen_capacity() {
        let mut rng = seeded(1, 99);
        let mut buf = ReplayBuffer::new(3, 1).unwrap();
        for i in 0..20 {
            buf = reservoir_update(buf, &[0.0], 0, i, &mut rng);
            assert_eq!(buf.len(), (i + 1).min(3));
        }
        assert!(ReplayBuffer::new(0, 1).is_err());
    }

    #[test]
    fn reservoir_is_deterministic() {
        let run = |seed| {
            let mut rng = seeded(seed, 99);
            let mut buf = ReplayBuffer::new(4, 1).unwrap();
            for i in 0..50 {
                buf.offer(&[0.0], 0, i, &mut rng);
            }
            buf
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn replay_sampling_modes() {
        let mut rng = seeded(2, 99);
        let mut buf = ReplayBuffer::new(10, 1).unwrap();
        assert!(buf.sample_slots(4, &mut rng).is_empty());
        for i in 0..3 {
            buf.offer(&[0.0], 0, i, &mut rng);
        }
        let with = buf.sample_slots(8, &mut rng);
        assert_eq!(with.len(), 8);
        let mut without = buf.sample_slots(3, &mut rng);
        without.sort_unstable();
        assert_eq!(without, vec![0, 1, 2]);
    }

    fn tiny() -> (LabeledDataset, ChunkStream, MlpConfig) {
        let ds = gaussian_blobs(2, 2, 16, 8.0, 0).unwrap();
        let stream = build_balanced_stream(&ds, 8, 0).unwrap();
        let cfg = MlpConfig::new(vec![2, 4, 2], Activation::Relu).unwrap();
        (ds, stream, cfg)
    }

    #[test]
    fn rejects_bad_configs() {
        let (ds, stream, cfg) = tiny();
        let init = mlp_init(&cfg, 0).unwrap();
        let er0 = TrainConfig { method: Method::Er, memory_size: 0, ..Default::default() };
        assert!(train_on_stream(&init, &cfg, &stream, &ds, None, &er0).is_err());
        let mut empty = stream.clone();
        empty.chunks.push(Vec::new());
        let tc = TrainConfig { epochs_per_chunk: 1, ..Default::default() };
        assert!(matches!(train_on_stream(&init, &cfg, &empty, &ds, None, &tc), Err(Error::EmptyChunk(4))));
        let eval = TrainConfig { eval_every_steps: 5, ..tc.clone() };
        assert!(train_on_stream(&init, &cfg, &stream, &ds, None, &eval).is_err());
    }

    #[test]
    fn zero_lr_keeps_init() {
        let (ds, stream, cfg) = tiny();
        let init = mlp_init(&cfg, 0).unwrap();
        let tc = TrainConfig { lr: 0.0, epochs_per_chunk: 3, ..Default::default() };
        let log = train_on_stream(&init, &cfg, &stream, &ds, None, &tc).unwrap();
        assert_eq!(log.checkpoints.len(), stream.len());
        assert!(log.checkpoints.iter().all(|c| c == &init));
    }

    #[test]
    fn step_count_and_boundaries() {
        let (ds, stream, cfg) = tiny();
        let init = mlp_init(&cfg, 0).unwrap();
        for (regime, epochs) in [(Regime::Standard, 3), (Regime::Online, 7)] {
            let tc = TrainConfig { epochs_per_chunk: epochs, batch_size: 3, regime, ..Default::default() };
            let log = train_on_stream(&init, &cfg, &stream, &ds, None, &tc).unwrap();
            let epochs = if regime == Regime::Online { 1 } else { 3 };
            assert_eq!(log.step_losses.len(), stream.len() * epochs * 3);
            assert_eq!(log.step_losses.len(), tc.expected_steps(&stream));
            assert!(log.chunk_boundaries.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn evaluate_edge_cases() {
        let (ds, _, cfg) = tiny();
        let zero = ParamVector::zeros(cfg.layout());
        let all: Vec<usize> = (0..ds.len()).collect();
        // All logits tie, so everything is predicted as class 0.
        assert_eq!(evaluate(&zero, &cfg, &all, &ds).unwrap(), 0.5);
        assert!(evaluate(&zero, &cfg, &[], &ds).is_err());
    }
}
