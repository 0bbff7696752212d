use chunklab::data::{
    build_balanced_stream, build_task_stream, build_unbalanced_stream, gaussian_blobs, LabeledDataset, StreamMode,
};
use chunklab::rng::seeded;
use chunklab::trainer::ReplayBuffer;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn labelled(counts: &[usize]) -> LabeledDataset {
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let features = (0..labels.len()).map(|i| i as f64).collect();
    LabeledDataset::new(features, 1, labels, counts.len()).unwrap()
}

proptest! {
    #[test]
    fn balanced_chunks_partition_and_balance(classes in 2usize..6, per_chunk in 1usize..5, n_chunks in 1usize..8, seed in any::<u64>()) {
        let ds = labelled(&vec![per_chunk * n_chunks; classes]);
        let stream = build_balanced_stream(&ds, classes * per_chunk, seed).unwrap();
        prop_assert_eq!(stream.len(), n_chunks);
        prop_assert!(stream.is_partition_of(ds.len()));
        for counts in stream.class_counts(&ds) {
            prop_assert_eq!(counts, vec![per_chunk; classes]);
        }
    }

    #[test]
    fn unbalanced_chunks_partition(n in 1usize..200, chunks in 1usize..20, seed in any::<u64>()) {
        prop_assume!(chunks <= n);
        let ds = if n < 2 { labelled(&[n, 0][..1]) } else { labelled(&[n.div_ceil(2), n / 2]) };
        let stream = build_unbalanced_stream(&ds, chunks, seed).unwrap();
        prop_assert!(stream.is_partition_of(ds.len()));
        let lens: Vec<usize> = stream.chunks.iter().map(Vec::len).collect();
        prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
    }

    #[test]
    fn task_chunks_hold_exactly_their_classes(groups in 1usize..6, per_task in 1usize..4, n in 1usize..10, seed in any::<u64>()) {
        let classes = groups * per_task;
        let ds = labelled(&vec![n; classes]);
        let stream = build_task_stream(&ds, per_task, seed).unwrap();
        prop_assert_eq!(stream.mode, StreamMode::ClassIncremental);
        prop_assert!(stream.is_partition_of(ds.len()));
        for (t, counts) in stream.class_counts(&ds).iter().enumerate() {
            for (c, &k) in counts.iter().enumerate() {
                let own = c / per_task == t;
                prop_assert_eq!(k, if own { n } else { 0 });
            }
        }
    }
}

#[test]
fn cifar100_shaped_balanced_split() {
    let ds = labelled(&vec![500; 100]);
    let stream = build_balanced_stream(&ds, 1000, 0).unwrap();
    assert_eq!(stream.len(), 50);
    for counts in stream.class_counts(&ds) {
        assert_eq!(counts, vec![10; 100]);
    }
}

#[test]
fn cifar10_shaped_task_split() {
    let ds = labelled(&vec![50; 10]);
    let stream = build_task_stream(&ds, 2, 0).unwrap();
    assert_eq!(stream.len(), 5);
    for (t, chunk) in stream.chunks.iter().enumerate() {
        assert!(chunk.iter().all(|&i| ds.label(i) / 2 == t));
    }
}

#[test]
fn unbalanced_chunks_are_balanced_in_expectation() {
    let ds = labelled(&[50, 50]);
    let seeds = 10_000u64;
    let mut totals = [[0usize; 2]; 2];
    for seed in 0..seeds {
        let stream = build_unbalanced_stream(&ds, 2, seed).unwrap();
        for (c, counts) in stream.class_counts(&ds).iter().enumerate() {
            totals[c][0] += counts[0];
            totals[c][1] += counts[1];
        }
    }
    let half = 50.0 / 2.0;
    for chunk in totals {
        for total in chunk {
            let mean = total as f64 / seeds as f64;
            assert!((mean - half).abs() <= 0.01 * half, "mean per-class count {mean}");
        }
    }
}

#[test]
fn reservoir_of_one_keeps_each_item_uniformly() {
    let n = 5;
    let seeds = 100_000u64;
    let mut kept = vec![0usize; n];
    for seed in 0..seeds {
        let mut rng = seeded(seed, 0);
        let mut buf = ReplayBuffer::new(1, 1).unwrap();
        for i in 0..n {
            buf.offer(&[i as f64], 0, i, &mut rng);
        }
        kept[buf.origins()[0]] += 1;
    }
    let p = 1.0 / n as f64;
    for (i, &k) in kept.iter().enumerate() {
        let freq = k as f64 / seeds as f64;
        assert!((freq - p).abs() <= 0.02 * p, "item {i} kept with frequency {freq}");
    }
}

#[test]
fn reservoir_of_many_keeps_each_item_uniformly() {
    let (n, cap) = (20, 4);
    let seeds = 50_000u64;
    let mut kept = vec![0usize; n];
    for seed in 0..seeds {
        let mut rng = seeded(seed, 1);
        let mut buf = ReplayBuffer::new(cap, 1).unwrap();
        for i in 0..n {
            buf.offer(&[0.0], 0, i, &mut rng);
        }
        for &o in buf.origins() {
            kept[o] += 1;
        }
    }
    let p = cap as f64 / n as f64;
    for &k in &kept {
        assert!((k as f64 / seeds as f64 - p).abs() <= 0.03 * p);
    }
}

#[test]
fn far_apart_blobs_are_linearly_separable() {
    let classes = 4;
    let ds = gaussian_blobs(2, classes, 500, 20.0, 3).unwrap();
    // One-vs-rest least squares on [x, 1] with ±1 targets, argmax decision.
    let n = ds.len();
    let mut x = DMatrix::zeros(n, 3);
    for i in 0..n {
        let row = ds.row(i);
        x[(i, 0)] = row[0];
        x[(i, 1)] = row[1];
        x[(i, 2)] = 1.0;
    }
    let svd = x.clone().svd(true, true);
    let weights: Vec<DVector<f64>> = (0..classes)
        .map(|c| {
            let y = DVector::from_iterator(n, (0..n).map(|i| if ds.label(i) == c { 1.0 } else { -1.0 }));
            svd.solve(&y, 1e-12).unwrap()
        })
        .collect();
    let scores: Vec<DVector<f64>> = weights.iter().map(|w| &x * w).collect();
    let correct = (0..n)
        .filter(|&i| {
            let best = (0..classes).max_by(|&a, &b| scores[a][i].total_cmp(&scores[b][i])).unwrap();
            best == ds.label(i)
        })
        .count();
    let acc = correct as f64 / n as f64;
    assert!(acc >= 0.99, "one-vs-rest accuracy {acc}");
}

#[test]
fn blob_centres_hit_requested_separation() {
    let ds = gaussian_blobs(3, 5, 4000, 6.0, 1).unwrap();
    let d = ds.dim();
    let means: Vec<Vec<f64>> = ds
        .class_indices()
        .iter()
        .map(|idx| {
            let mut m = vec![0.0; d];
            for &i in idx {
                for (a, v) in m.iter_mut().zip(ds.row(i)) {
                    *a += v / idx.len() as f64;
                }
            }
            m
        })
        .collect();
    let mut closest = f64::INFINITY;
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let dist = means[a].iter().zip(&means[b]).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            closest = closest.min(dist);
        }
    }
    // Sample means of 4000 unit-variance points are within a few 0.02 of the centres.
    assert!((closest - 6.0).abs() < 0.15, "closest class means {closest} apart");
}
