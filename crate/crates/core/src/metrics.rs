//! Measurement protocols: accuracy matrices, forgetting, stability gap and
//! the chunking-proportion decomposition.

use serde::Serialize;

use crate::averaging::{running_averages, AveragerMode};
use crate::data::{ChunkStream, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{MlpConfig, ParamVector};
use crate::trainer::{evaluate, evaluate_all, RunLog};

/// Share (in percent) of the offline-to-CL accuracy drop caused by
/// chunking alone: `100 (offline − chunking) / (offline − cl)`.
pub fn chunking_proportion(offline_acc: f64, chunking_acc: f64, cl_acc: f64) -> Result<f64> {
    if !(offline_acc > cl_acc) {
        return Err(Error::invalid(format!(
            "chunking proportion undefined: offline accuracy {offline_acc} does not exceed CL accuracy {cl_acc}"
        )));
    }
    Ok(100.0 * (offline_acc - chunking_acc) / (offline_acc - cl_acc))
}

/// Row `k` is measured after chunk `k`; column 0 is test accuracy and
/// column `1 + i` the accuracy on the training data of `tracked[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyMatrix {
    pub rows: Vec<Vec<f64>>,
    /// 0-based chunk indices.
    pub tracked: Vec<usize>,
}

impl AccuracyMatrix {
    pub fn chunks(&self) -> usize {
        self.rows.len()
    }

    pub fn test(&self, k: usize) -> f64 {
        self.rows[k][0]
    }

    /// Accuracy after chunk `k` on the `i`-th tracked chunk.
    pub fn tracked_acc(&self, k: usize, i: usize) -> f64 {
        self.rows[k][1 + i]
    }

    /// CSV with header `chunk_end,test,acc_chunk_<j>...` (chunks 1-based).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunk_end,test");
        for j in &self.tracked {
            out.push_str(&format!(",acc_chunk_{}", j + 1));
        }
        out.push('\n');
        for (k, row) in self.rows.iter().enumerate() {
            out.push_str(&(k + 1).to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Tracked chunks at 10%, 40% and 80% of the stream (the 5th, 20th and
/// 40th of 50), 0-based and deduplicated.
pub fn default_tracked_chunks(n_chunks: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [0.1, 0.4, 0.8]
        .iter()
        .map(|p| ((p * n_chunks as f64).round() as usize).clamp(1, n_chunks.max(1)) - 1)
        .collect();
    out.dedup();
    out
}

/// Evaluates each parameter snapshot (one per chunk) on every tracked
/// chunk's training rows and on the test set.
pub fn accuracy_matrix_from(
    snapshots: &[ParamVector],
    tracked: &[usize],
    stream: &ChunkStream,
    dataset: &LabeledDataset,
    test: &LabeledDataset,
    config: &MlpConfig,
) -> Result<AccuracyMatrix> {
    if let Some(&bad) = tracked.iter().find(|&&j| j >= stream.len()) {
        return Err(Error::invalid(format!("tracked chunk {bad} outside a {}-chunk stream", stream.len())));
    }
    let rows = snapshots
        .iter()
        .map(|p| {
            let mut row = Vec::with_capacity(tracked.len() + 1);
            row.push(evaluate_all(p, config, test)?);
            for &j in tracked {
                row.push(evaluate(p, config, stream.chunk(j), dataset)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyMatrix { rows, tracked: tracked.to_vec() })
}

/// Accuracy matrix of a run, using end-of-chunk checkpoints or, when
/// `averager` is given, the running average after each chunk.
pub fn accuracy_matrix(
    runlog: &RunLog,
    tracked: &[usize],
    stream: &ChunkStream,
    dataset: &LabeledDataset,
    test: &LabeledDataset,
    config: &MlpConfig,
    averager: Option<AveragerMode>,
) -> Result<AccuracyMatrix> {
    match averager {
        None => accuracy_matrix_from(&runlog.checkpoints, tracked, stream, dataset, test, config),
        Some(mode) => {
            let avgs = running_averages(mode, &runlog.checkpoints)?;
            accuracy_matrix_from(&avgs, tracked, stream, dataset, test, config)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForgettingPoint {
    /// Row (chunk end), 0-based.
    pub k: usize,
    /// Tracked chunk, 0-based.
    pub j: usize,
    /// Drop since the chunk was learned: `A[j][j] − A[k][j]`.
    pub forgetting: f64,
    /// Remaining advantage over the test set: `A[k][j] − A[k][test]`.
    pub gap_to_test: f64,
}

/// Forgetting curves for every tracked chunk over the rows `k ≥ j`.
pub fn forgetting_report(a: &AccuracyMatrix) -> Vec<ForgettingPoint> {
    let mut out = Vec::new();
    for (i, &j) in a.tracked.iter().enumerate() {
        if j >= a.chunks() {
            continue;
        }
        let learned = a.tracked_acc(j, i);
        for k in j..a.chunks() {
            let acc = a.tracked_acc(k, i);
            out.push(ForgettingPoint { k, j, forgetting: learned - acc, gap_to_test: acc - a.test(k) });
        }
    }
    out
}

/// CSV `k,j,F,G` with 1-based chunk numbers.
pub fn forgetting_csv(points: &[ForgettingPoint]) -> String {
    let mut out = String::from("k,j,F,G\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.k + 1, p.j + 1, p.forgetting, p.gap_to_test));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTrace {
    /// `(steps completed, test accuracy)`, sorted by step.
    pub samples: Vec<(usize, f64)>,
    /// Step indices at which chunks start.
    pub boundaries: Vec<usize>,
    pub window: usize,
}

impl StabilityTrace {
    pub fn from_runlog(log: &RunLog, window: usize) -> Self {
        Self { samples: log.eval_trace.clone(), boundaries: log.chunk_boundaries.clone(), window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityDip {
    pub boundary: usize,
    pub dip: f64,
}

/// For each boundary after the first: accuracy of the last sample at or
/// before the boundary minus the minimum over samples in `(b, b + W]`.
/// Boundaries with no sample before them, or none inside the window, are
/// reported with a dip of 0.
pub fn stability_gap(trace: &StabilityTrace) -> Vec<StabilityDip> {
    trace
        .boundaries
        .iter()
        .skip(1)
        .map(|&b| {
            let before = trace.samples.iter().rev().find(|(s, _)| *s <= b).map(|&(_, a)| a);
            let after = trace
                .samples
                .iter()
                .filter(|(s, _)| *s > b && *s <= b + trace.window)
                .map(|&(_, a)| a)
                .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.min(a))));
            let dip = match (before, after) {
                (Some(pre), Some(low)) => pre - low,
                _ => 0.0,
            };
            StabilityDip { boundary: b, dip }
        })
        .collect()
}

pub fn stability_csv(dips: &[StabilityDip]) -> String {
    let mut out = String::from("boundary,dip\n");
    for d in dips {
        out.push_str(&format!("{},{}\n", d.boundary, d.dip));
    }
    out
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportion_table_rows() {
        let cifar = chunking_proportion(73.72, 63.35, 53.00).unwrap();
        let tiny = chunking_proportion(60.63, 50.54, 39.02).unwrap();
        assert!((cifar - 50.05).abs() < 0.01, "{cifar}");
        assert!((tiny - 46.69).abs() < 0.01, "{tiny}");
        assert_eq!(chunking_proportion(70.0, 70.0, 50.0).unwrap(), 0.0);
        assert!(chunking_proportion(50.0, 45.0, 50.0).is_err());
    }

    fn matrix(rows: Vec<Vec<f64>>, tracked: Vec<usize>) -> AccuracyMatrix {
        AccuracyMatrix { rows, tracked }
    }

    #[test]
    fn forgetting_arithmetic() {
        let a = matrix(vec![vec![0.5, 1.0], vec![0.55, 0.6]], vec![0]);
        let f = forgetting_report(&a);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].forgetting, 0.0);
        assert!((f[1].forgetting - 0.4).abs() < 1e-15);
        assert!((f[1].gap_to_test - 0.05).abs() < 1e-12);
    }

    #[test]
    fn constant_model_never_forgets() {
        let a = matrix(vec![vec![0.7, 0.7, 0.7]; 6], vec![1, 4]);
        assert!(forgetting_report(&a).iter().all(|p| p.forgetting == 0.0));
    }

    #[test]
    fn matrix_csv_header() {
        let a = matrix(vec![vec![0.5, 1.0, 0.25]], vec![0, 4]);
        assert_eq!(a.to_csv(), "chunk_end,test,acc_chunk_1,acc_chunk_5\n1,0.5,1,0.25\n");
    }

    #[test]
    fn tracked_defaults() {
        assert_eq!(default_tracked_chunks(50), vec![4, 19, 39]);
        assert_eq!(default_tracked_chunks(10), vec![0, 3, 7]);
        assert_eq!(default_tracked_chunks(1), vec![0]);
    }

    #[test]
    fn dip_arithmetic() {
        let trace = StabilityTrace {
            samples: vec![(0, 0.2), (99, 0.8), (101, 0.5), (105, 0.7), (200, 0.1)],
            boundaries: vec![0, 100],
            window: 10,
        };
        let dips = stability_gap(&trace);
        assert_eq!(dips.len(), 1);
        assert!((dips[0].dip - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_has_no_dips() {
        let samples = (0..100).map(|s| (s * 10, 0.9)).collect();
        let trace = StabilityTrace { samples, boundaries: vec![0, 100, 200, 300], window: 50 };
        assert!(stability_gap(&trace).iter().all(|d| d.dip == 0.0));
    }

    #[test]
    fn samples_outside_windows_do_not_matter() {
        let base = StabilityTrace {
            samples: vec![(90, 0.8), (100, 0.8), (110, 0.6), (120, 0.7)],
            boundaries: vec![0, 100],
            window: 20,
        };
        let mut more = base.clone();
        more.samples.insert(0, (10, 0.0));
        more.samples.push((500, 0.0));
        assert_eq!(stability_gap(&base), stability_gap(&more));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
