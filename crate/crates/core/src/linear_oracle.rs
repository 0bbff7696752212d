//! Closed-form analysis of the chunking setting for linear regression.
//!
//! Bayesian linear regression (BLR) is exactly chunking-invariant: its
//! posterior depends on the data only through `Σ_t X_tᵀX_t` and
//! `Σ_t X_tᵀy_t`. Weight averaging (WA) keeps only a running mean of the
//! per-chunk least-squares solutions, which approximates the flat-prior BLR
//! mean increasingly well as chunks grow.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{regression_chunks, RegressionChunk, RegressionSpec};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, sym_eigenvalues};
use crate::model::{auto_jitter, least_squares_fit};
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    /// `V₀ = b·I` with `b → ∞`, encoded as zero prior precision.
    Flat,
    /// `V₀ = b·I`.
    Isotropic { b: f64 },
}

impl Prior {
    fn precision(self, d: usize) -> DMatrix<f64> {
        match self {
            Prior::Flat => DMatrix::zeros(d, d),
            Prior::Isotropic { b } => DMatrix::identity(d, d) / b,
        }
    }
}

/// Gaussian posterior over the weights in information form.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrPosterior {
    precision: DMatrix<f64>,
    /// `precision * mean`
    info: DVector<f64>,
    mean: Option<DVector<f64>>,
    noise_var: f64,
    prior: Prior,
    chunks_seen: usize,
}

impl BlrPosterior {
    pub fn new(dim: usize, noise_var: f64, prior: Prior) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("posterior dimension must be at least 1"));
        }
        if !(noise_var > 0.0) {
            return Err(Error::invalid(format!("noise variance {noise_var} must be > 0")));
        }
        if let Prior::Isotropic { b } = prior {
            if !(b > 0.0) {
                return Err(Error::invalid(format!("prior scale {b} must be > 0")));
            }
        }
        let precision = prior.precision(dim);
        let mean = match prior {
            Prior::Flat => None,
            Prior::Isotropic { .. } => Some(DVector::zeros(dim)),
        };
        Ok(Self { precision, info: DVector::zeros(dim), mean, noise_var, prior, chunks_seen: 0 })
    }

    pub fn dim(&self) -> usize {
        self.info.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    pub fn chunks_seen(&self) -> usize {
        self.chunks_seen
    }

    /// Posterior mean; errors while the precision is still singular.
    pub fn mean(&self) -> Result<&DVector<f64>> {
        self.mean.as_ref().ok_or(Error::SingularPosterior)
    }

    /// `P_k = P_{k-1} + XᵀX/σ²`, `m_k = P_k⁻¹ (P_{k-1} m_{k-1} + Xᵀy/σ²)`.
    pub fn update(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_chunk(x, y, self.dim())?;
        let inv_var = 1.0 / self.noise_var;
        let carried = match &self.mean {
            Some(m) => &self.precision * m,
            None => self.info.clone(),
        };
        let mut precision = &self.precision + x.tr_mul(x) * inv_var;
        symmetrize(&mut precision);
        let info = carried + x.tr_mul(y) * inv_var;
        let mean = spd_solve(&precision, &info).ok();
        Ok(Self { precision, info, mean, noise_var: self.noise_var, prior: self.prior, chunks_seen: self.chunks_seen + 1 })
    }
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn check_chunk(x: &DMatrix<f64>, y: &DVector<f64>, dim: usize) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::DimensionMismatch { context: "chunk columns vs dimension", expected: dim, got: x.ncols() });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { context: "chunk rows vs targets", expected: x.nrows(), got: y.len() });
    }
    Ok(())
}

pub fn blr_update(post: &BlrPosterior, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<BlrPosterior> {
    post.update(x, y)
}

/// Sequential BLR over all chunks in order.
pub fn blr_sequential(chunks: &[RegressionChunk], noise_var: f64, prior: Prior) -> Result<BlrPosterior> {
    let dim = chunks.first().map(|c| c.x.ncols()).ok_or_else(|| Error::invalid("no chunks"))?;
    chunks
        .iter()
        .try_fold(BlrPosterior::new(dim, noise_var, prior)?, |post, c| post.update(&c.x, &c.y))
}

/// Posterior from the expanded (non-recursive) form over all chunks at once.
pub fn blr_batch(chunks: &[RegressionChunk], noise_var: f64, prior: Prior) -> Result<BlrPosterior> {
    let empty = BlrPosterior::new(chunks.first().map_or(0, |c| c.x.ncols()), noise_var, prior)?;
    let dim = empty.dim();
    let mut gram = DMatrix::zeros(dim, dim);
    let mut proj = DVector::zeros(dim);
    for c in chunks {
        check_chunk(&c.x, &c.y, dim)?;
        gram += c.x.tr_mul(&c.x);
        proj += c.x.tr_mul(&c.y);
    }
    let inv_var = 1.0 / noise_var;
    let mut precision = prior.precision(dim) + gram * inv_var;
    symmetrize(&mut precision);
    let info = proj * inv_var;
    let mean = spd_solve(&precision, &info).map_err(|_| Error::SingularPosterior)?;
    Ok(BlrPosterior { precision, info, mean: Some(mean), noise_var, prior, chunks_seen: chunks.len() })
}

/// Running mean of per-chunk least-squares solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct WaLinearState {
    mean: DVector<f64>,
    count: usize,
    jittered: usize,
    allow_jitter: bool,
}

impl WaLinearState {
    pub fn new(dim: usize, allow_jitter: bool) -> Self {
        Self { mean: DVector::zeros(dim), count: 0, jittered: 0, allow_jitter }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn chunk_count(&self) -> usize {
        self.count
    }

    /// Chunks whose solve needed the automatic ridge.
    pub fn jittered_chunks(&self) -> usize {
        self.jittered
    }

    /// `m_k = ((k-1)/k) m_{k-1} + (1/k) (X_kᵀX_k)⁻¹ X_kᵀ y_k`
    pub fn update(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_chunk(x, y, self.mean.len())?;
        let mut jittered = self.jittered;
        let solution = match least_squares_fit(x, y, 0.0) {
            Ok(w) => w,
            Err(Error::SingularSystem(_)) if self.allow_jitter => {
                jittered += 1;
                least_squares_fit(x, y, auto_jitter(x))?
            }
            Err(e) => return Err(e),
        };
        let count = self.count + 1;
        let k = count as f64;
        let mean = &self.mean * ((k - 1.0) / k) + solution * (1.0 / k);
        Ok(Self { mean, count, jittered, allow_jitter: self.allow_jitter })
    }
}

pub fn wa_linear_update(state: &WaLinearState, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<WaLinearState> {
    state.update(x, y)
}

pub fn wa_linear(chunks: &[RegressionChunk], allow_jitter: bool) -> Result<WaLinearState> {
    let dim = chunks.first().map(|c| c.x.ncols()).ok_or_else(|| Error::invalid("no chunks"))?;
    chunks.iter().try_fold(WaLinearState::new(dim, allow_jitter), |s, c| s.update(&c.x, &c.y))
}

/// Every symbol of the approximation bound. `a1`, `a2`, `a3` are the
/// unspecified universal constants of the covariance concentration
/// inequality and default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Params {
    pub s: f64,
    pub d: f64,
    pub k: f64,
    pub delta: f64,
    pub alpha_sg: f64,
    pub lambda_d: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for Theorem1Params {
    fn default() -> Self {
        Self { s: 200.0, d: 5.0, k: 10.0, delta: 0.0, alpha_sg: 1.0, lambda_d: 0.2, a_x: 6.0, a_y: 1.0, a1: 1.0, a2: 1.0, a3: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    pub epsilon: f64,
    pub bound: f64,
    /// Chunk size threshold above which the bound is applicable.
    pub min_s: f64,
    pub prob_floor: f64,
}

impl Theorem1Params {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("S", self.s),
            ("d", self.d),
            ("k", self.k),
            ("alpha", self.alpha_sg),
            ("lambda_d", self.lambda_d),
            ("a_x", self.a_x),
            ("a_y", self.a_y),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("bound parameter {name} = {v} must be positive and finite")));
        }
        let delta_max = self.lambda_d / (self.alpha_sg * self.alpha_sg);
        if !(self.delta >= 0.0 && self.delta < delta_max) {
            return Err(Error::invalid(format!("delta {} outside [0, {delta_max})", self.delta)));
        }
        Ok(())
    }

    /// `ε(S, δ) = α² [a1 (√(d/S) + d/S) + δ]`
    pub fn epsilon(&self) -> f64 {
        let r = self.d / self.s;
        self.alpha_sg * self.alpha_sg * (self.a1 * (r.sqrt() + r) + self.delta)
    }

    /// Chunk size at which `ε(S, δ) = λ_d`; the bound needs `S` above it.
    pub fn min_chunk_size(&self) -> f64 {
        let a2 = self.alpha_sg * self.alpha_sg;
        let slack = self.lambda_d - a2 * self.delta;
        let inner = self.alpha_sg * (self.a1 * (a2 * self.a1 + 4.0 * slack)).sqrt();
        a2 * self.a1 * (a2 * self.a1 + 2.0 * slack + inner) / (2.0 * slack * slack) * self.d
    }

    /// Smallest integer chunk size with `ε < λ_d`.
    pub fn min_applicable_chunk_size(&self) -> u64 {
        let mut s = self.min_chunk_size().floor().max(1.0) as u64;
        while (Self { s: s as f64, ..*self }).epsilon() >= self.lambda_d {
            s += 1;
        }
        s
    }
}

/// Evaluates the WA-vs-BLR approximation bound.
pub fn theorem1_bound(p: &Theorem1Params) -> Result<Theorem1Bound> {
    p.validate()?;
    let epsilon = p.epsilon();
    if epsilon >= p.lambda_d {
        return Err(Error::BoundInapplicable {
            epsilon,
            lambda_d: p.lambda_d,
            min_applicable_s: p.min_applicable_chunk_size(),
        });
    }
    let gap = p.lambda_d - epsilon;
    let bound = 2.0 * p.a_x * p.a_y / p.s.sqrt() * epsilon / (gap * gap);
    let prob_floor = 1.0 - p.k * p.a2 * (-p.a3 * p.s * p.delta.min(p.delta * p.delta)).exp();
    Ok(Theorem1Bound { epsilon, bound, min_s: p.min_chunk_size(), prob_floor })
}

/// Configuration of the WA-vs-BLR approximation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub d: usize,
    pub chunk_sizes: Vec<usize>,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub lambda_d: f64,
    pub noise_sd: f64,
    pub a_x: f64,
    pub alpha_sg: f64,
    pub delta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            d: 5,
            chunk_sizes: vec![50, 100, 200, 400, 800],
            k: 10,
            seeds: (0..20).collect(),
            lambda_d: 0.2,
            noise_sd: 0.5,
            a_x: 6.0,
            alpha_sg: 1.0,
            delta: 0.0,
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
        }
    }
}

impl StudyConfig {
    pub fn regression_spec(&self, s: usize) -> RegressionSpec {
        RegressionSpec {
            dim: self.d,
            chunk_size: s,
            chunks: self.k,
            truncation_radius: self.a_x,
            noise_sd: self.noise_sd,
            lambda_min: self.lambda_d,
        }
    }

    pub fn bound_params(&self, s: usize, a_y: f64) -> Theorem1Params {
        Theorem1Params {
            s: s as f64,
            d: self.d as f64,
            k: self.k as f64,
            delta: self.delta,
            alpha_sg: self.alpha_sg,
            lambda_d: self.lambda_d,
            a_x: self.a_x,
            a_y,
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub s: usize,
    pub seed: u64,
    pub gap: f64,
    /// Realized bound on the per-chunk target norms.
    pub a_y: f64,
    /// `+inf` where the bound is inapplicable at this chunk size.
    pub bound: f64,
    pub min_s: f64,
    pub prob_floor: f64,
}

/// Bound value, `+inf` where inapplicable.
fn bound_or_inf(p: &Theorem1Params) -> Result<Theorem1Bound> {
    match theorem1_bound(p) {
        Ok(b) => Ok(b),
        Err(Error::BoundInapplicable { epsilon, .. }) => Ok(Theorem1Bound {
            epsilon,
            bound: f64::INFINITY,
            min_s: p.min_chunk_size(),
            prob_floor: 1.0 - p.k * p.a2 * (-p.a3 * p.s * p.delta.min(p.delta * p.delta)).exp(),
        }),
        Err(e) => Err(e),
    }
}

/// `‖m_BLR − m_WA‖₂` for one seed and chunk size.
pub fn study_cell(cfg: &StudyConfig, s: usize, seed: u64) -> Result<StudyRow> {
    if s < cfg.d {
        return Err(Error::invalid(format!("chunk size {s} below dimension {}", cfg.d)));
    }
    let set = regression_chunks(&cfg.regression_spec(s), seed)?;
    // The flat-prior mean does not depend on σ², so any positive value works
    // for the noiseless family.
    let noise_var = if cfg.noise_sd > 0.0 { cfg.noise_sd * cfg.noise_sd } else { 1.0 };
    let blr = blr_batch(&set.chunks, noise_var, Prior::Flat)?;
    let wa = wa_linear(&set.chunks, false)?;
    let gap = (blr.mean()? - wa.mean()).norm();
    let b = bound_or_inf(&cfg.bound_params(s, set.a_y))?;
    Ok(StudyRow { s, seed, gap, a_y: set.a_y, bound: b.bound, min_s: b.min_s, prob_floor: b.prob_floor })
}

/// Every `(S, seed)` cell, ordered by chunk size then seed.
pub fn empirical_convergence_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("study needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(cfg.chunk_sizes.len() * cfg.seeds.len());
    for &s in &cfg.chunk_sizes {
        for &seed in &cfg.seeds {
            rows.push(study_cell(cfg, s, seed)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudySummary {
    pub s: usize,
    pub mean_gap: f64,
    pub mean_bound: f64,
}

/// Per-chunk-size means, in first-appearance order of `S`.
pub fn summarize_study(rows: &[StudyRow]) -> Vec<StudySummary> {
    let mut sizes: Vec<usize> = Vec::new();
    for r in rows {
        if !sizes.contains(&r.s) {
            sizes.push(r.s);
        }
    }
    sizes
        .into_iter()
        .map(|s| {
            let cell: Vec<&StudyRow> = rows.iter().filter(|r| r.s == s).collect();
            let n = cell.len() as f64;
            StudySummary {
                s,
                mean_gap: cell.iter().map(|r| r.gap).sum::<f64>() / n,
                mean_bound: cell.iter().map(|r| r.bound).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("log-log slope needs >= 2 strictly positive points"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Smallest `a1` on the grid `a1_start · 2^j` for which the bound (with
/// `+inf` where inapplicable) dominates every observed gap.
pub fn calibrate_a1(cfg: &StudyConfig, rows: &[StudyRow], a1_start: f64) -> Result<f64> {
    if !(a1_start > 0.0) {
        return Err(Error::invalid("a1_start must be > 0"));
    }
    let mut a1 = a1_start;
    for _ in 0..200 {
        let trial = StudyConfig { a1, ..cfg.clone() };
        let mut ok = true;
        for r in rows {
            if r.gap > bound_or_inf(&trial.bound_params(r.s, r.a_y))?.bound {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(a1);
        }
        a1 *= 2.0;
    }
    Err(Error::invalid("a1 calibration did not converge"))
}

/// Relative discrepancies between sequential, batch and re-ordered BLR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub mean_rel_err: f64,
    pub precision_rel_err: f64,
}

impl InvarianceReport {
    pub fn within(&self, tol: f64) -> bool {
        self.mean_rel_err <= tol && self.precision_rel_err <= tol
    }
}

/// Compares the batch posterior with sequential updates over the chunks in
/// the given orders (each a permutation of chunk indices).
pub fn chunk_invariance(
    chunks: &[RegressionChunk],
    noise_var: f64,
    prior: Prior,
    orders: &[Vec<usize>],
) -> Result<InvarianceReport> {
    let batch = blr_batch(chunks, noise_var, prior)?;
    let bm = batch.mean()?;
    let mut report = InvarianceReport { mean_rel_err: 0.0, precision_rel_err: 0.0 };
    for order in orders {
        let reordered: Vec<RegressionChunk> = order.iter().map(|&i| chunks[i].clone()).collect();
        let seq = blr_sequential(&reordered, noise_var, prior)?;
        let m_err = (seq.mean()? - bm).norm() / bm.norm().max(f64::MIN_POSITIVE);
        let p_err = (seq.precision() - batch.precision()).norm() / batch.precision().norm().max(f64::MIN_POSITIVE);
        report.mean_rel_err = report.mean_rel_err.max(m_err);
        report.precision_rel_err = report.precision_rel_err.max(p_err);
    }
    Ok(report)
}

/// `count` uniformly random orderings of `0..k`, reproducible from `seed`.
pub fn random_orders(k: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seeded(seed, stream::ORDERS);
    (0..count)
        .map(|_| {
            let mut o: Vec<usize> = (0..k).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect()
}

/// Smallest eigenvalue of `P_k − P_{k−1}` along a sequential run.
pub fn precision_increments_min_eigenvalue(chunks: &[RegressionChunk], noise_var: f64, prior: Prior) -> Result<f64> {
    let dim = chunks.first().map(|c| c.x.ncols()).ok_or_else(|| Error::invalid("no chunks"))?;
    let mut post = BlrPosterior::new(dim, noise_var, prior)?;
    let mut worst = f64::INFINITY;
    for c in chunks {
        let next = post.update(&c.x, &c.y)?;
        let diff = next.precision() - post.precision();
        worst = worst.min(sym_eigenvalues(&diff)[0]);
        post = next;
    }
    Ok(worst)
}
