//! One function per subcommand. Each schedules its independent cells on the
//! given pool, collects results in cell order and writes its CSVs.

use std::path::{Path, PathBuf};

use chunklab::data::{regression_chunks, RegressionSpec, StreamMode};
use chunklab::experiment::{
    averager_label, chunk_curve_cell, cl_compare_cell, run_cell, stability_cell, Benchmark, Chunking,
};
use chunklab::linear_oracle::{
    calibrate_a1, chunk_invariance, log_log_slope, random_orders, study_cell, summarize_study, Prior,
};
use chunklab::metrics::{
    accuracy_matrix, default_tracked_chunks, forgetting_csv, forgetting_report, mean, median, stability_csv,
};
use chunklab::rng::derive_seed;
use chunklab::trainer::{Method, Regime};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{file_label, write_atomic, Csv};

/// Files written by a command, for the manifest.
pub type Written = Vec<PathBuf>;

fn par_collect<T: Send, R: Send>(
    pool: &ThreadPool,
    cells: Vec<T>,
    f: impl Fn(T) -> CliResult<R> + Sync + Send,
) -> CliResult<Vec<R>> {
    pool.install(|| cells.into_par_iter().map(f).collect())
}

fn save_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))? + "\n";
    write_atomic(path, text.as_bytes())
}

fn config_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

/// Chunkings swept by the curve, largest chunk first; always includes the
/// single-chunk (offline) point.
fn curve_chunkings(cfg: &ExperimentConfig, bench: &Benchmark) -> CliResult<Vec<Chunking>> {
    let m = bench.train.len();
    let mut sizes: Vec<usize> = if cfg.stream.chunk_sizes.is_empty() {
        cfg.stream
            .chunk_counts
            .iter()
            .map(|&n| {
                if n == 0 || m % n != 0 {
                    Err(config_err("stream.chunk_counts", format!("{m} training examples do not split into {n} equal chunks")))
                } else {
                    Ok(m / n)
                }
            })
            .collect::<CliResult<_>>()?
    } else {
        cfg.stream.chunk_sizes.clone()
    };
    if !sizes.contains(&m) {
        sizes.push(m);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();
    sizes
        .into_iter()
        .map(|s| {
            let chunking = match cfg.stream.mode {
                StreamMode::IidBalanced => Chunking::IidBalanced { chunk_size: s },
                StreamMode::IidUnbalanced => Chunking::IidUnbalanced { n_chunks: (m / s.max(1)).max(1) },
                StreamMode::ClassIncremental => {
                    return Err(config_err("stream.mode", "chunk-curve needs an i.i.d. stream mode"));
                }
            };
            chunking.build(&bench.train, 0).map_err(|e| config_err("stream.chunk_sizes", e))?;
            Ok(chunking)
        })
        .collect()
}

fn count_chunking(cfg: &ExperimentConfig, bench: &Benchmark, n: usize) -> CliResult<Chunking> {
    let chunking = match cfg.stream.mode {
        StreamMode::IidBalanced => Chunking::balanced_count(&bench.train, n).map_err(|e| config_err("stream.n_chunks", e))?,
        StreamMode::IidUnbalanced => Chunking::IidUnbalanced { n_chunks: n },
        StreamMode::ClassIncremental => Chunking::ClassIncremental { classes_per_task: cfg.stream.classes_per_task },
    };
    chunking.build(&bench.train, 0).map_err(|e| config_err("stream", e))?;
    Ok(chunking)
}

pub fn chunk_curve(cfg: &ExperimentConfig, out: &Path, pool: &ThreadPool) -> CliResult<Written> {
    let bench = cfg.benchmark()?;
    let model = cfg.model_spec();
    let averagers = cfg.averagers()?;
    let chunkings = curve_chunkings(cfg, &bench)?;
    let grid = !cfg.train.epochs_grid.is_empty();
    let epochs = if grid { cfg.train.epochs_grid.clone() } else { vec![cfg.train.epochs_per_chunk] };

    let mut written = Vec::new();
    for e in epochs {
        let dir = if grid { out.join(format!("epochs_{e}")) } else { out.to_path_buf() };
        let mut cells = Vec::new();
        for &chunking in &chunkings {
            for &seed in &cfg.seeds {
                for &method in &cfg.train.methods {
                    cells.push((chunking, seed, method));
                }
            }
        }
        let results = par_collect(pool, cells, |(chunking, seed, method)| {
            let tc = cfg.train_config(method, Regime::Standard, e);
            Ok(chunk_curve_cell(&bench, &model, &tc, chunking, seed, &averagers)?)
        })?;
        let rows: Vec<_> = results.into_iter().flatten().collect();

        let mut csv = Csv::new("chunk_size,seed,method,averager,final_test_acc");
        for r in &rows {
            csv.row(&[&r.chunk_size, &r.seed, &r.method.as_str(), &r.averager, &r.final_test_acc]);
        }
        let path = dir.join("chunk_curve.csv");
        csv.write(&path)?;
        written.push(path);

        let mut summary = Csv::new("chunk_size,method,averager,mean_acc,median_acc");
        let mut keys: Vec<(usize, Method, String)> = Vec::new();
        for r in &rows {
            let key = (r.chunk_size, r.method, r.averager.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (size, method, avg) in keys {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.chunk_size == size && r.method == method && r.averager == avg)
                .map(|r| r.final_test_acc)
                .collect();
            summary.row(&[&size, &method.as_str(), &avg, &mean(&accs), &median(&accs)]);
        }
        let path = dir.join("chunk_curve_summary.csv");
        summary.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn tracked_chunks(cfg: &ExperimentConfig, n_chunks: usize) -> CliResult<Vec<usize>> {
    if cfg.stream.tracked.is_empty() {
        return Ok(default_tracked_chunks(n_chunks));
    }
    cfg.stream
        .tracked
        .iter()
        .map(|&j| {
            if j > n_chunks {
                Err(config_err("stream.tracked", format!("chunk {j} outside a {n_chunks}-chunk stream")))
            } else {
                Ok(j - 1)
            }
        })
        .collect()
}

pub fn forgetting(cfg: &ExperimentConfig, out: &Path, pool: &ThreadPool) -> CliResult<Written> {
    let bench = cfg.benchmark()?;
    let model = cfg.model_spec();
    let averagers = cfg.averagers()?;
    let chunking = count_chunking(cfg, &bench, cfg.stream.n_chunks)?;
    let n_chunks = chunking.build(&bench.train, 0)?.len();
    let tracked = tracked_chunks(cfg, n_chunks)?;

    let mut cells = Vec::new();
    for &method in &cfg.train.methods {
        for &seed in &cfg.seeds {
            cells.push((method, seed));
        }
    }
    let results = par_collect(pool, cells, |(method, seed)| {
        let tc = cfg.train_config(method, Regime::Standard, cfg.train.epochs_per_chunk);
        let run = run_cell(&bench, &model, &tc, chunking, seed)?;
        let dir = out.join(method.as_str()).join(format!("seed_{seed}"));
        let mut files = Vec::new();
        for &a in &averagers {
            let m = accuracy_matrix(&run.log, &tracked, &run.stream, &bench.train, &bench.test, &run.config, a)?;
            let label = file_label(&averager_label(a));
            let path = dir.join(format!("accuracy_matrix_{label}.csv"));
            write_atomic(&path, m.to_csv().as_bytes())?;
            files.push(path);
            let path = dir.join(format!("forgetting_{label}.csv"));
            write_atomic(&path, forgetting_csv(&forgetting_report(&m)).as_bytes())?;
            files.push(path);
        }
        if cfg.save_runs {
            run.log.save(dir.join("run"))?;
        }
        Ok(files)
    })?;
    Ok(results.into_iter().flatten().collect())
}

pub fn stability(cfg: &ExperimentConfig, out: &Path, pool: &ThreadPool) -> CliResult<Written> {
    if cfg.train.eval_every_steps == 0 {
        return Err(config_err("train.eval_every_steps", "stability needs a value > 0"));
    }
    let bench = cfg.benchmark()?;
    let model = cfg.model_spec();
    count_chunking(cfg, &bench, cfg.stream.n_chunks)?;

    let mut cells = Vec::new();
    for &method in &cfg.train.methods {
        for &seed in &cfg.seeds {
            cells.push((method, seed));
        }
    }
    let results = par_collect(pool, cells, |(method, seed)| {
        let tc = cfg.train_config(method, Regime::Standard, cfg.train.epochs_per_chunk);
        let res = stability_cell(&bench, &model, &tc, cfg.stream.n_chunks, cfg.stream.window, seed)?;
        let dir = out.join(method.as_str()).join(format!("seed_{seed}"));
        let dips_path = dir.join("stability.csv");
        write_atomic(&dips_path, stability_csv(&res.dips).as_bytes())?;
        let mut trace = Csv::new("step,test_acc");
        for (s, a) in &res.trace.samples {
            trace.row(&[s, a]);
        }
        let trace_path = dir.join("trace.csv");
        trace.write(&trace_path)?;
        let dips: Vec<f64> = res.dips.iter().map(|d| d.dip).collect();
        Ok((method, seed, mean(&dips), vec![dips_path, trace_path]))
    })?;

    let mut summary = Csv::new("method,seed,mean_dip");
    let mut written = Vec::new();
    for (method, seed, dip, files) in results {
        summary.row(&[&method.as_str(), &seed, &dip]);
        written.extend(files);
    }
    let path = out.join("stability_summary.csv");
    summary.write(&path)?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct InvarianceOut {
    d: usize,
    k: usize,
    chunk_size: usize,
    noise_var: f64,
    seeds: usize,
    orders_per_seed: usize,
    max_mean_rel_err: f64,
    max_precision_rel_err: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct StudyReport {
    log_log_slope: f64,
    mean_gap_smallest_s: f64,
    mean_gap_largest_s: f64,
    /// Smallest `a1 = 2^j` for which the bound dominates every observed gap.
    calibrated_a1: f64,
    invariance: InvarianceOut,
}

const INVARIANCE_TOL: f64 = 1e-8;

pub fn linear_study(cfg: &ExperimentConfig, out: &Path, pool: &ThreadPool) -> CliResult<Written> {
    let study = cfg.study_config();
    let mut cells = Vec::new();
    for &s in &study.chunk_sizes {
        if s < study.d {
            return Err(config_err("linear.chunk_sizes", format!("chunk size {s} is below d = {}", study.d)));
        }
        for &seed in &study.seeds {
            cells.push((s, seed));
        }
    }
    let rows = par_collect(pool, cells, |(s, seed)| Ok(study_cell(&study, s, seed)?))?;

    let mut written = Vec::new();
    let mut csv = Csv::new("S,seed,gap,bound,min_S,prob_floor");
    for r in &rows {
        csv.row(&[&r.s, &r.seed, &r.gap, &r.bound, &r.min_s, &r.prob_floor]);
    }
    let path = out.join("linear_study.csv");
    csv.write(&path)?;
    written.push(path);

    let summary = summarize_study(&rows);
    let mut sc = Csv::new("S,mean_gap,mean_bound");
    for s in &summary {
        sc.row(&[&s.s, &s.mean_gap, &s.mean_bound]);
    }
    let path = out.join("linear_summary.csv");
    sc.write(&path)?;
    written.push(path);

    let l = &cfg.linear;
    let inv_cells: Vec<u64> = study.seeds.clone();
    let reports = par_collect(pool, inv_cells, |seed| {
        let spec = RegressionSpec {
            dim: l.d,
            chunk_size: l.invariance_chunk_size,
            chunks: l.k,
            truncation_radius: l.a_x,
            noise_sd: l.invariance_noise_sd,
            lambda_min: l.lambda_d,
        };
        let set = regression_chunks(&spec, seed)?;
        let mut orders = vec![(0..l.k).rev().collect::<Vec<_>>()];
        orders.extend(random_orders(l.k, l.invariance_orders, derive_seed(seed, 17)));
        let noise_var = if l.invariance_noise_sd > 0.0 { l.invariance_noise_sd.powi(2) } else { 1.0 };
        Ok(chunk_invariance(&set.chunks, noise_var, Prior::Flat, &orders)?)
    })?;
    let max_m = reports.iter().map(|r| r.mean_rel_err).fold(0.0, f64::max);
    let max_p = reports.iter().map(|r| r.precision_rel_err).fold(0.0, f64::max);

    let points: Vec<(f64, f64)> = summary.iter().map(|s| (s.s as f64, s.mean_gap)).collect();
    let report = StudyReport {
        log_log_slope: log_log_slope(&points).unwrap_or(f64::NAN),
        mean_gap_smallest_s: summary.iter().min_by_key(|s| s.s).map_or(f64::NAN, |s| s.mean_gap),
        mean_gap_largest_s: summary.iter().max_by_key(|s| s.s).map_or(f64::NAN, |s| s.mean_gap),
        calibrated_a1: calibrate_a1(&study, &rows, 1.0)?,
        invariance: InvarianceOut {
            d: l.d,
            k: l.k,
            chunk_size: l.invariance_chunk_size,
            noise_var: l.invariance_noise_sd.powi(2),
            seeds: study.seeds.len(),
            orders_per_seed: l.invariance_orders + 1,
            max_mean_rel_err: max_m,
            max_precision_rel_err: max_p,
            tolerance: INVARIANCE_TOL,
            passed: max_m <= INVARIANCE_TOL && max_p <= INVARIANCE_TOL,
        },
    };
    let path = out.join("linear_report.json");
    save_json(&path, &report)?;
    written.push(path);
    Ok(written)
}

pub fn cl_compare(cfg: &ExperimentConfig, out: &Path, pool: &ThreadPool) -> CliResult<Written> {
    let bench = cfg.benchmark()?;
    let model = cfg.model_spec();
    let averagers = cfg.averagers()?;
    let cpt = cfg.stream.classes_per_task;
    Chunking::ClassIncremental { classes_per_task: cpt }
        .build(&bench.train, 0)
        .map_err(|e| config_err("stream.classes_per_task", e))?;

    let mut cells = Vec::new();
    for &regime in &cfg.train.regimes {
        for &method in &cfg.train.methods {
            for &seed in &cfg.seeds {
                cells.push((regime, method, seed));
            }
        }
    }
    // ΔAcc is measured against final weights, so they are always evaluated.
    let mut averagers = averagers;
    if !averagers.contains(&None) {
        averagers.insert(0, None);
    }
    let results = par_collect(pool, cells, |(regime, method, seed)| {
        let tc = cfg.train_config(method, regime, cfg.train.epochs_per_chunk);
        let (rows, steps) = cl_compare_cell(&bench, &model, &tc, cpt, regime, method, seed, &averagers)?;
        Ok((rows, steps))
    })?;

    let mut csv = Csv::new("setting,method,averager,seed,final_acc");
    let mut delta = Csv::new("setting,method,averager,seed,delta_acc");
    let mut steps_csv = Csv::new("setting,method,seed,steps");
    let mut deltas: Vec<(Regime, Method, String, f64)> = Vec::new();
    for (rows, steps) in &results {
        let base = rows.iter().find(|r| r.averager == "none").map(|r| r.final_acc);
        for r in rows {
            csv.row(&[&r.setting.as_str(), &r.method.as_str(), &r.averager, &r.seed, &r.final_acc]);
            if let (Some(b), true) = (base, r.averager != "none") {
                delta.row(&[&r.setting.as_str(), &r.method.as_str(), &r.averager, &r.seed, &(r.final_acc - b)]);
                deltas.push((r.setting, r.method, r.averager.clone(), r.final_acc - b));
            }
        }
        if let Some(r) = rows.first() {
            steps_csv.row(&[&r.setting.as_str(), &r.method.as_str(), &r.seed, steps]);
        }
    }
    let mut summary = Csv::new("setting,method,averager,median_delta_acc");
    let mut keys: Vec<(Regime, Method, String)> = Vec::new();
    for (r, m, a, _) in &deltas {
        if !keys.contains(&(*r, *m, a.clone())) {
            keys.push((*r, *m, a.clone()));
        }
    }
    for (r, m, a) in keys {
        let vals: Vec<f64> =
            deltas.iter().filter(|d| d.0 == r && d.1 == m && d.2 == a).map(|d| d.3).collect();
        summary.row(&[&r.as_str(), &m.as_str(), &a, &median(&vals)]);
    }

    let mut written = Vec::new();
    for (name, c) in [
        ("cl_compare.csv", &csv),
        ("cl_delta.csv", &delta),
        ("cl_summary.csv", &summary),
        ("cl_steps.csv", &steps_csv),
    ] {
        let path = out.join(name);
        c.write(&path)?;
        written.push(path);
    }
    Ok(written)
}
