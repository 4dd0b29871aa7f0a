//! Epoch batching: seeded permutations with optional length bucketing.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};

/// Split one epoch over `lengths.len()` utterances into index batches.
///
/// Every epoch is a seeded permutation visiting each utterance exactly once;
/// the final batch may be short. With `bucketing`, utterances are grouped by
/// length so batches stay duration-homogeneous, and batch order is shuffled.
pub fn epoch_batches(
    lengths: &[usize],
    batch_size: usize,
    bucketing: bool,
    rng: &mut StdRng,
) -> Result<Vec<Vec<usize>>> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }

    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);

    if bucketing {
        // Stable sort after the shuffle: equal lengths stay in shuffled
        // order, so composition still varies across epochs.
        order.sort_by_key(|&i| lengths[i]);
        let mut batches: Vec<Vec<usize>> =
            order.chunks(batch_size).map(|c| c.to_vec()).collect();
        batches.shuffle(rng);
        Ok(batches)
    } else {
        Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
    }
}
