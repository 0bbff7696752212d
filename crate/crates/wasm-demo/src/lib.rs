//! Browser bindings for three small chunklab experiments. Every export takes
//! plain numbers or a JSON string and returns JSON, so the page needs no
//! generated type glue beyond wasm-bindgen's.

use chunklab::data::gaussian_blobs;
use chunklab::experiment::{chunk_curve_cell, parse_averager, Benchmark, Chunking, ModelSpec};
use chunklab::linear_oracle::{
    empirical_convergence_study, summarize_study, theorem1_bound, StudyConfig, Theorem1Params,
};
use chunklab::trainer::TrainConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct BoundPoint {
    pub s: f64,
    pub epsilon: f64,
    /// `null` where the bound does not apply.
    pub bound: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundCurve {
    pub min_s: f64,
    pub points: Vec<BoundPoint>,
}

/// Upper bound on ‖WA − BLR‖ over a log-spaced grid of chunk sizes.
pub fn bound_curve_json(params: &str, s_max: f64, points: usize) -> Result<String, String> {
    let base: Theorem1Params = serde_json::from_str(params).map_err(|e| e.to_string())?;
    if !(s_max > base.d) || points < 2 {
        return Err(format!("need s_max > d = {} and at least 2 points", base.d));
    }
    let (lo, hi) = (base.d.ln(), s_max.ln());
    let points = (0..points)
        .map(|i| {
            let s = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
            let p = Theorem1Params { s, ..base };
            let epsilon = p.epsilon();
            BoundPoint { s, epsilon, bound: theorem1_bound(&p).ok().map(|b| b.bound) }
        })
        .collect();
    let curve = BoundCurve { min_s: base.min_chunk_size(), points };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct GapPoint {
    pub s: usize,
    pub mean_gap: f64,
    /// `null` where the bound does not apply.
    pub mean_bound: Option<f64>,
}

/// Mean ‖WA − BLR‖ per chunk size on synthetic linear regression.
pub fn gap_study_json(d: usize, k: usize, seeds: u64, noise_sd: f64, chunk_sizes: &[usize]) -> Result<String, String> {
    let cfg = StudyConfig {
        d,
        k,
        seeds: (0..seeds).collect(),
        noise_sd,
        chunk_sizes: chunk_sizes.to_vec(),
        ..StudyConfig::default()
    };
    let rows = empirical_convergence_study(&cfg).map_err(|e| e.to_string())?;
    let out: Vec<GapPoint> = summarize_study(&rows)
        .into_iter()
        .map(|s| GapPoint { s: s.s, mean_gap: s.mean_gap, mean_bound: s.mean_bound.is_finite().then_some(s.mean_bound) })
        .collect();
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub n_chunks: usize,
    pub chunk_size: usize,
    pub averager: String,
    pub test_acc: f64,
}

/// Small chunked-SGD sweep on 2D blobs: test accuracy of the final and
/// averaged weights for each chunk count.
pub fn chunk_curve_json(
    chunk_counts: &[usize],
    per_class: usize,
    separation: f64,
    epochs: usize,
    averagers: &str,
    seed: u64,
) -> Result<String, String> {
    let avgs = averagers
        .split(',')
        .map(|a| parse_averager(a.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let ds = gaussian_blobs(2, 4, per_class, separation, seed).map_err(|e| e.to_string())?;
    let bench = Benchmark::new(&ds, None, seed).map_err(|e| e.to_string())?;
    let tc = TrainConfig { epochs_per_chunk: epochs, ..TrainConfig::default() };
    let mut out = Vec::new();
    for &n in chunk_counts {
        let chunking = Chunking::balanced_count(&bench.train, n).map_err(|e| format!("{n} chunks: {e}"))?;
        for row in chunk_curve_cell(&bench, &ModelSpec::default(), &tc, chunking, seed, &avgs).map_err(|e| e.to_string())? {
            out.push(CurvePoint { n_chunks: n, chunk_size: row.chunk_size, averager: row.averager, test_acc: row.final_test_acc });
        }
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn bound_curve(params: &str, s_max: f64, points: usize) -> Result<String, JsError> {
    bound_curve_json(params, s_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gap_study(d: usize, k: usize, seeds: u32, noise_sd: f64, chunk_sizes: Vec<u32>) -> Result<String, JsError> {
    let sizes: Vec<usize> = chunk_sizes.into_iter().map(|s| s as usize).collect();
    gap_study_json(d, k, u64::from(seeds), noise_sd, &sizes).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn chunk_curve(
    chunk_counts: Vec<u32>,
    per_class: usize,
    separation: f64,
    epochs: usize,
    averagers: &str,
    seed: u32,
) -> Result<String, JsError> {
    let counts: Vec<usize> = chunk_counts.into_iter().map(|c| c as usize).collect();
    chunk_curve_json(&counts, per_class, separation, epochs, averagers, u64::from(seed)).map_err(|e| JsError::new(&e))
}

/// Default bound parameters, for seeding the page's form.
#[wasm_bindgen]
pub fn default_bound_params() -> String {
    serde_json::to_string(&Theorem1Params::default()).expect("plain struct serializes")
}
