use std::collections::HashSet;

use chunklab::averaging::{AveragerMode, AveragerState};
use chunklab::data::{build_balanced_stream, build_task_stream, gaussian_blobs};
use chunklab::experiment::{run_cell, Benchmark, Chunking, ModelSpec};
use chunklab::metrics::{accuracy_matrix, default_tracked_chunks};
use chunklab::model::{mlp_init, MlpConfig, Activation};
use chunklab::trainer::{evaluate_all, train_on_stream, train_on_stream_observed, Method, Regime, TrainConfig};

fn separable() -> Benchmark {
    let ds = gaussian_blobs(2, 4, 1000, 20.0, 0).unwrap();
    Benchmark::new(&ds, None, 0).unwrap()
}

#[test]
fn one_chunk_fits_separable_blobs() {
    let bench = separable();
    let tc = TrainConfig { epochs_per_chunk: 20, ..Default::default() };
    let run = run_cell(&bench, &ModelSpec::default(), &tc, Chunking::IidBalanced { chunk_size: bench.train.len() }, 0)
        .unwrap();
    let train_acc = evaluate_all(run.log.checkpoints.last().unwrap(), &run.config, &bench.train).unwrap();
    assert!(train_acc >= 0.99, "train accuracy {train_acc}");
}

#[test]
fn chunks_are_fit_perfectly_on_separable_data() {
    let bench = separable();
    let chunking = Chunking::balanced_count(&bench.train, 50).unwrap();
    let run = run_cell(&bench, &ModelSpec::default(), &TrainConfig::default(), chunking, 1).unwrap();
    let tracked = default_tracked_chunks(50);
    let m = accuracy_matrix(&run.log, &tracked, &run.stream, &bench.train, &bench.test, &run.config, None).unwrap();
    assert_eq!(m.rows.len(), 50);
    for (i, &j) in tracked.iter().enumerate() {
        assert_eq!(m.tracked_acc(j, i), 1.0, "chunk {j}");
    }
}

#[test]
fn loss_falls_within_every_chunk() {
    let ds = gaussian_blobs(2, 4, 200, 4.0, 2).unwrap();
    let bench = Benchmark::new(&ds, None, 0).unwrap();
    let tc = TrainConfig { epochs_per_chunk: 10, ..Default::default() };
    let chunking = Chunking::balanced_count(&bench.train, 5).unwrap();
    let run = run_cell(&bench, &ModelSpec::default(), &tc, chunking, 4).unwrap();
    assert!(run.loss_converges_per_chunk(10));
}

#[test]
fn runs_are_reproducible_per_seed() {
    let ds = gaussian_blobs(2, 4, 100, 4.0, 0).unwrap();
    let bench = Benchmark::new(&ds, None, 0).unwrap();
    for method in [Method::PlainSgd, Method::Er] {
        let tc = TrainConfig { epochs_per_chunk: 3, method, eval_every_steps: 5, ..Default::default() };
        let chunking = Chunking::balanced_count(&bench.train, 4).unwrap();
        let a = run_cell(&bench, &ModelSpec::default(), &tc, chunking, 9).unwrap();
        let b = run_cell(&bench, &ModelSpec::default(), &tc, chunking, 9).unwrap();
        let c = run_cell(&bench, &ModelSpec::default(), &tc, chunking, 10).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.stream, b.stream);
        assert_ne!(a.log.checkpoints, c.log.checkpoints);
    }
}

#[test]
fn averaging_never_touches_the_trajectory() {
    let ds = gaussian_blobs(2, 4, 60, 4.0, 0).unwrap();
    let config = MlpConfig::new(vec![2, 16, 4], Activation::Relu).unwrap();
    let init = mlp_init(&config, 3).unwrap();
    let stream = build_balanced_stream(&ds, 40, 5).unwrap();
    let tc = TrainConfig { epochs_per_chunk: 4, method: Method::Er, memory_size: 20, ..Default::default() };
    let plain = train_on_stream(&init, &config, &stream, &ds, None, &tc).unwrap();

    let mut avgs = [AveragerState::new(AveragerMode::Mean), AveragerState::new(AveragerMode::Ema { alpha: 0.8 })];
    let observed = train_on_stream_observed(&init, &config, &stream, &ds, None, &tc, |_, theta, _| {
        for a in &mut avgs {
            a.update(theta).unwrap();
        }
    })
    .unwrap();
    assert_eq!(plain, observed);
    assert_eq!(avgs[0].chunk_count(), stream.len());
    assert_ne!(avgs[0].get().unwrap(), plain.checkpoints.last().unwrap());
}

#[test]
fn replay_buffer_only_holds_seen_examples() {
    let ds = gaussian_blobs(2, 6, 40, 4.0, 0).unwrap();
    let config = MlpConfig::new(vec![2, 8, 6], Activation::Relu).unwrap();
    let init = mlp_init(&config, 0).unwrap();
    let stream = build_task_stream(&ds, 2, 1).unwrap();
    for regime in [Regime::Standard, Regime::Online] {
        let tc = TrainConfig { epochs_per_chunk: 2, method: Method::Er, memory_size: 30, regime, ..Default::default() };
        let mut seen: HashSet<usize> = HashSet::new();
        let mut sizes = Vec::new();
        train_on_stream_observed(&init, &config, &stream, &ds, None, &tc, |c, _, buf| {
            seen.extend(stream.chunk(c));
            let buf = buf.expect("ER keeps a buffer");
            assert!(buf.origins().iter().all(|o| seen.contains(o)), "chunk {c}: buffer holds unseen rows");
            for (slot, &o) in buf.origins().iter().enumerate() {
                assert_eq!(buf.labels()[slot], ds.label(o));
                assert_eq!(buf.row(slot), ds.row(o));
            }
            sizes.push(buf.len());
        })
        .unwrap();
        assert_eq!(sizes, vec![30; 3]);
    }
}

#[test]
fn plain_sgd_has_no_buffer() {
    let ds = gaussian_blobs(2, 2, 20, 4.0, 0).unwrap();
    let config = MlpConfig::new(vec![2, 4, 2], Activation::Relu).unwrap();
    let init = mlp_init(&config, 0).unwrap();
    let stream = build_balanced_stream(&ds, 20, 0).unwrap();
    let tc = TrainConfig { epochs_per_chunk: 1, ..Default::default() };
    train_on_stream_observed(&init, &config, &stream, &ds, None, &tc, |_, _, buf| assert!(buf.is_none())).unwrap();
}
