//! Fully connected classifier with softmax cross-entropy.
//!
//! Parameters are laid out layer by layer: weight matrix (`out x in`,
//! row-major) followed by bias (`out`).

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Layout, ParamVector, Role, Segment};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let cfg = Self { layer_sizes, activation };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes {:?} need at least two entries, all >= 1",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated config")
    }

    fn layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layout(&self) -> Layout {
        let mut segments = Vec::with_capacity(2 * self.layers());
        let mut offset = 0;
        for (layer, w) in self.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            segments.push(Segment { layer, role: Role::Weight, offset, rows: fan_out, cols: fan_in });
            offset += fan_in * fan_out;
            segments.push(Segment { layer, role: Role::Bias, offset, rows: fan_out, cols: 1 });
            offset += fan_out;
        }
        Layout { segments }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total_len()
    }
}

/// He initialization: weights `N(0, 2/fan_in)`, biases zero.
pub fn mlp_init(config: &MlpConfig, seed: u64) -> Result<ParamVector> {
    config.validate()?;
    let layout = config.layout();
    let mut params = ParamVector::zeros(layout.clone());
    let mut rng = seeded(seed, stream::INIT);
    for seg in layout.segments.iter().filter(|s| s.role == Role::Weight) {
        let sd = (2.0 / seg.cols as f64).sqrt();
        for v in &mut params.values_mut()[seg.range()] {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(params)
}

fn check_inputs(params: &ParamVector, config: &MlpConfig, features: &[f64], n: usize) -> Result<()> {
    config.validate()?;
    if params.layout() != &config.layout() {
        return Err(Error::LayoutMismatch);
    }
    if features.len() != n * config.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "batch features vs input width",
            expected: n * config.input_dim(),
            got: features.len(),
        });
    }
    Ok(())
}

/// Activations of every layer; the last entry holds the logits.
fn forward(params: &ParamVector, config: &MlpConfig, features: &[f64], n: usize) -> Vec<Vec<f64>> {
    let layers = config.layers();
    let mut acts = Vec::with_capacity(layers + 1);
    acts.push(features.to_vec());
    for l in 0..layers {
        let (fan_in, fan_out) = (config.layer_sizes[l], config.layer_sizes[l + 1]);
        let w = &params.values()[params.layout().segments[2 * l].range()];
        let b = &params.values()[params.layout().segments[2 * l + 1].range()];
        let input = &acts[l];
        let mut out = vec![0.0; n * fan_out];
        for r in 0..n {
            let x = &input[r * fan_in..(r + 1) * fan_in];
            for (o, slot) in out[r * fan_out..(r + 1) * fan_out].iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *slot = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        if l + 1 < layers {
            for v in &mut out {
                *v = config.activation.apply(*v);
            }
        }
        acts.push(out);
    }
    acts
}

/// Row-wise softmax of an `n x classes` logit matrix (log-sum-exp stabilized).
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Logits for `n` rows of features.
pub fn predict(params: &ParamVector, config: &MlpConfig, features: &[f64], n: usize) -> Result<Vec<f64>> {
    check_inputs(params, config, features, n)?;
    Ok(forward(params, config, features, n).pop().expect("logits"))
}

/// Argmax class per row; ties go to the lowest class id.
pub fn predict_labels(params: &ParamVector, config: &MlpConfig, features: &[f64], n: usize) -> Result<Vec<usize>> {
    let classes = config.output_dim();
    let logits = predict(params, config, features, n)?;
    Ok(logits
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    config: &MlpConfig,
    features: &[f64],
    labels: &[usize],
) -> Result<(f64, ParamVector)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    check_inputs(params, config, features, n)?;
    let classes = config.output_dim();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
    }
    let acts = forward(params, config, features, n);
    let logits = &acts[acts.len() - 1];

    let mut loss = 0.0;
    let mut delta = vec![0.0; n * classes];
    let inv_n = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[label];
        for (c, d) in delta[r * classes..(r + 1) * classes].iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *d = (p - if c == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    loss *= inv_n;

    let mut grad = params.zeros_like();
    let layout = params.layout().clone();
    for l in (0..config.layers()).rev() {
        let (fan_in, fan_out) = (config.layer_sizes[l], config.layer_sizes[l + 1]);
        let input = &acts[l];
        let w_seg = &layout.segments[2 * l];
        let b_seg = &layout.segments[2 * l + 1];
        {
            let g = grad.values_mut();
            for r in 0..n {
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                let x = &input[r * fan_in..(r + 1) * fan_in];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let gw = &mut g[w_seg.offset + o * fan_in..w_seg.offset + (o + 1) * fan_in];
                    for (gi, xi) in gw.iter_mut().zip(x) {
                        *gi += dv * xi;
                    }
                    g[b_seg.offset + o] += dv;
                }
            }
        }
        if l > 0 {
            let w = params.segment(w_seg);
            let mut prev = vec![0.0; n * fan_in];
            for r in 0..n {
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                let p = &mut prev[r * fan_in..(r + 1) * fan_in];
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pi, wi) in p.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *pi += dv * wi;
                    }
                }
                for (pi, &a) in p.iter_mut().zip(&input[r * fan_in..(r + 1) * fan_in]) {
                    *pi *= config.activation.derivative_from_output(a);
                }
            }
            delta = prev;
        }
    }
    Ok((loss, grad))
}

/// `params - lr * grad`
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut out = params.clone();
    out.axpy(-lr, grad)?;
    Ok(out)
}
