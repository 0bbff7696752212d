//! Differentiable models over flat parameter vectors.

mod least_squares;
mod mlp;
mod pvec;

pub use least_squares::{auto_jitter, least_squares_fit};
pub use mlp::{loss_and_grad, mlp_init, predict, predict_labels, sgd_step, softmax_rows, Activation, MlpConfig};
pub use pvec::{decode_pvec, encode_pvec, read_pvec, write_pvec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Weight,
    Bias,
}

/// One contiguous block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub layer: usize,
    pub role: Role,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn total_len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// A single unnamed weight block of `len` entries.
    pub fn flat(len: usize) -> Self {
        Self { segments: vec![Segment { layer: 0, role: Role::Weight, offset: 0, rows: 1, cols: len }] }
    }

    fn is_contiguous(&self) -> bool {
        let mut next = 0;
        self.segments.iter().all(|s| {
            let ok = s.offset == next;
            next += s.len();
            ok
        })
    }
}

/// All learnable parameters of a model as one dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.total_len() || !layout.is_contiguous() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector values vs layout",
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    /// Unstructured vector, handy for tests and scalar examples.
    pub fn from_flat(values: Vec<f64>) -> Self {
        let layout = Layout::flat(values.len());
        Self { values, layout }
    }

    pub fn zeros(layout: Layout) -> Self {
        Self { values: vec![0.0; layout.total_len()], layout }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, seg: &Segment) -> &[f64] {
        &self.values[seg.range()]
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.ensure_same_layout(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
