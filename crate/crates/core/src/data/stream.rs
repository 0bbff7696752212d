use rand::seq::SliceRandom;

use super::{ChunkStream, LabeledDataset, StreamMode};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Reserves `per_class_test` examples of every class for a test set.
///
/// Both outputs keep the original row order.
pub fn split_train_test(
    dataset: &LabeledDataset,
    per_class_test: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = seeded(seed, stream::SPLIT);
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = Vec::with_capacity(per_class_test * dataset.class_count());
    for (class, mut idx) in dataset.class_indices().into_iter().enumerate() {
        if idx.len() < per_class_test {
            return Err(Error::InsufficientData {
                class,
                available: idx.len(),
                required: per_class_test,
            });
        }
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..per_class_test]);
        train.extend_from_slice(&idx[per_class_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

fn balanced_feasible(counts: &[usize], total: usize, chunk_size: usize) -> bool {
    if chunk_size == 0 || chunk_size > total || total % chunk_size != 0 {
        return false;
    }
    let n_chunks = total / chunk_size;
    let per_class = counts[0];
    counts.iter().all(|&c| c == per_class) && per_class % n_chunks == 0
}

/// Largest chunk size `<= chunk_size` that yields equal, fully class-balanced chunks.
pub fn largest_feasible_chunk_size(train: &LabeledDataset, chunk_size: usize) -> Option<usize> {
    let counts = train.class_counts();
    if counts.is_empty() {
        return None;
    }
    (1..=chunk_size.min(train.len()))
        .rev()
        .find(|&s| balanced_feasible(&counts, train.len(), s))
}

/// Builds i.i.d. class-balanced chunks of size `chunk_size`.
///
/// Per-class shuffle, class-ordered list (ascending class id), cyclic
/// allocation into `M / S` chunks, within-chunk shuffle, then a shuffle of
/// the chunk order.
pub fn build_balanced_stream(train: &LabeledDataset, chunk_size: usize, seed: u64) -> Result<ChunkStream> {
    let total = train.len();
    let counts = train.class_counts();
    if chunk_size == 0 || total / chunk_size == 0 || !balanced_feasible(&counts, total, chunk_size) {
        return Err(Error::BalanceInfeasible {
            chunk_size,
            largest_feasible: largest_feasible_chunk_size(train, chunk_size.max(1)),
        });
    }
    let n_chunks = total / chunk_size;
    let mut rng = seeded(seed, stream::BALANCED);

    let mut ordered = Vec::with_capacity(total);
    for mut idx in train.class_indices() {
        idx.shuffle(&mut rng);
        ordered.extend(idx);
    }
    let mut chunks = vec![Vec::with_capacity(chunk_size); n_chunks];
    for (pos, i) in ordered.into_iter().enumerate() {
        chunks[pos % n_chunks].push(i);
    }
    for c in &mut chunks {
        c.shuffle(&mut rng);
    }
    chunks.shuffle(&mut rng);
    Ok(ChunkStream { chunks, mode: StreamMode::IidBalanced, seed })
}

/// Splits a uniform random permutation of the training set into `n_chunks`
/// near-equal slices with no class balancing.
pub fn build_unbalanced_stream(train: &LabeledDataset, n_chunks: usize, seed: u64) -> Result<ChunkStream> {
    let total = train.len();
    if n_chunks == 0 {
        return Err(Error::invalid("n_chunks must be at least 1"));
    }
    if n_chunks > total {
        return Err(Error::invalid(format!("n_chunks {n_chunks} exceeds the {total} training examples")));
    }
    let mut rng = seeded(seed, stream::UNBALANCED);
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(&mut rng);
    let base = total / n_chunks;
    let extra = total % n_chunks;
    let mut chunks = Vec::with_capacity(n_chunks);
    let mut start = 0;
    for c in 0..n_chunks {
        let len = base + usize::from(c < extra);
        chunks.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(ChunkStream { chunks, mode: StreamMode::IidUnbalanced, seed })
}

/// Class-incremental stream: task `t` holds all training data of classes
/// `t*classes_per_task .. (t+1)*classes_per_task`, shuffled within the task.
pub fn build_task_stream(train: &LabeledDataset, classes_per_task: usize, seed: u64) -> Result<ChunkStream> {
    let classes = train.class_count();
    if classes_per_task == 0 || classes % classes_per_task != 0 {
        return Err(Error::invalid(format!(
            "{classes} classes cannot be split into tasks of {classes_per_task} classes"
        )));
    }
    let mut rng = seeded(seed, stream::TASKS);
    let by_class = train.class_indices();
    let chunks = by_class
        .chunks(classes_per_task)
        .map(|group| {
            let mut chunk: Vec<usize> = group.iter().flatten().copied().collect();
            chunk.shuffle(&mut rng);
            chunk
        })
        .collect();
    Ok(ChunkStream { chunks, mode: StreamMode::ClassIncremental, seed })
}
