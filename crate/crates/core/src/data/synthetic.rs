use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream, Rng};

/// Number of random center configurations tried by [`gaussian_blobs`].
const CENTER_CANDIDATES: usize = 64;

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}

/// `class_count` isotropic unit-variance Gaussian clusters of `per_class`
/// points each in `d` dimensions.
///
/// Centers lie on a common sphere. Among a fixed number of random direction
/// sets the most spread-out one is kept, and the radius is set so the
/// closest pair of centers is exactly `separation` apart. Rows are ordered
/// by class.
pub fn gaussian_blobs(
    d: usize,
    class_count: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if d < 2 || class_count < 2 || per_class < 1 || !(separation > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian_blobs needs d >= 2, C >= 2, n >= 1, separation > 0 (got d={d}, C={class_count}, \
             n={per_class}, separation={separation})"
        )));
    }
    let mut rng = seeded(seed, stream::BLOBS);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..CENTER_CANDIDATES {
        let dirs: Vec<Vec<f64>> = (0..class_count).map(|_| unit_vector(&mut rng, d)).collect();
        let spread = min_pairwise_distance(&dirs);
        if best.as_ref().is_none_or(|(s, _)| spread > *s) {
            best = Some((spread, dirs));
        }
    }
    let (spread, dirs) = best.expect("at least one candidate");
    let radius = separation / spread;

    let mut features = Vec::with_capacity(class_count * per_class * d);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (class, dir) in dirs.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(dir.iter().map(|&c| radius * c + normal(&mut rng)));
            labels.push(class);
        }
    }
    LabeledDataset::new(features, d, labels, class_count)
}

/// Parameters of the synthetic regression family.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub dim: usize,
    pub chunk_size: usize,
    pub chunks: usize,
    /// Rows are rejected until their Euclidean norm is at most this radius.
    pub truncation_radius: f64,
    pub noise_sd: f64,
    /// Smallest eigenvalue of the (diagonal) row covariance; the others are
    /// spaced linearly up to 1.
    pub lambda_min: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self { dim: 5, chunk_size: 50, chunks: 10, truncation_radius: 6.0, noise_sd: 0.5, lambda_min: 0.2 }
    }
}

impl RegressionSpec {
    /// Diagonal of the row covariance, largest first.
    pub fn covariance_eigenvalues(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.lambda_min];
        }
        (0..self.dim)
            .map(|i| 1.0 - (1.0 - self.lambda_min) * i as f64 / (self.dim - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionChunk {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionChunkSet {
    pub chunks: Vec<RegressionChunk>,
    /// Bound on every row norm.
    pub a_x: f64,
    /// Realized maximum of the per-chunk target norms.
    pub a_y: f64,
    pub true_weights: DVector<f64>,
    pub noise_sd: f64,
    pub covariance_eigenvalues: Vec<f64>,
}

impl RegressionChunkSet {
    pub fn dim(&self) -> usize {
        self.true_weights.len()
    }

    /// All chunks stacked into one design.
    pub fn concatenated(&self) -> RegressionChunk {
        let rows: usize = self.chunks.iter().map(|c| c.x.nrows()).sum();
        let d = self.dim();
        let mut x = DMatrix::zeros(rows, d);
        let mut y = DVector::zeros(rows);
        let mut r = 0;
        for c in &self.chunks {
            x.rows_mut(r, c.x.nrows()).copy_from(&c.x);
            y.rows_mut(r, c.y.len()).copy_from(&c.y);
            r += c.x.nrows();
        }
        RegressionChunk { x, y }
    }
}

/// Bounded sub-Gaussian regression chunks: rows from `N(0, Σ)` rejected to
/// `‖x‖₂ ≤ a_x`, targets `y = Xθ* + noise` with `θ*` on the unit sphere.
pub fn regression_chunks(spec: &RegressionSpec, seed: u64) -> Result<RegressionChunkSet> {
    let RegressionSpec { dim, chunk_size, chunks, truncation_radius, noise_sd, lambda_min } = *spec;
    if dim == 0 || chunks == 0 || chunk_size < dim {
        return Err(Error::invalid(format!(
            "regression_chunks needs d >= 1, k >= 1, S >= d (got d={dim}, S={chunk_size}, k={chunks})"
        )));
    }
    if !(truncation_radius > 0.0) || !(noise_sd >= 0.0) || !(lambda_min > 0.0 && lambda_min <= 1.0) {
        return Err(Error::invalid("need a_x > 0, noise_sd >= 0 and lambda_min in (0, 1]"));
    }
    let eig = spec.covariance_eigenvalues();
    let scale: Vec<f64> = eig.iter().map(|l| l.sqrt()).collect();
    let mut rng = seeded(seed, stream::REGRESSION);
    let theta = DVector::from_vec(unit_vector(&mut rng, dim));

    let r2 = truncation_radius * truncation_radius;
    let mut attempts: u64 = 0;
    let mut accepted: u64 = 0;
    let mut row = vec![0.0; dim];
    let mut out = Vec::with_capacity(chunks);
    let mut a_y = 0.0f64;
    for _ in 0..chunks {
        let mut x = DMatrix::zeros(chunk_size, dim);
        for r in 0..chunk_size {
            loop {
                attempts += 1;
                for (v, s) in row.iter_mut().zip(&scale) {
                    *v = s * normal(&mut rng);
                }
                if row.iter().map(|v| v * v).sum::<f64>() <= r2 {
                    accepted += 1;
                    break;
                }
                if attempts >= 1000 && (accepted as f64) < 1e-3 * attempts as f64 {
                    return Err(Error::RejectionRate { rate: accepted as f64 / attempts as f64 });
                }
            }
            for (c, v) in row.iter().enumerate() {
                x[(r, c)] = *v;
            }
        }
        let mut y = &x * &theta;
        if noise_sd > 0.0 {
            for v in y.iter_mut() {
                *v += noise_sd * normal(&mut rng);
            }
        }
        a_y = a_y.max(y.norm());
        out.push(RegressionChunk { x, y });
    }
    Ok(RegressionChunkSet {
        chunks: out,
        a_x: truncation_radius,
        a_y,
        true_weights: theta,
        noise_sd,
        covariance_eigenvalues: eig,
    })
}
