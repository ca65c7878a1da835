use crate::numerics::derive_stream;

use super::SourceId;

/// Fisher-Yates permutation of `0..n` for one epoch.
pub fn epoch_shuffle(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut stream = derive_stream(seed, SourceId::DataShuffle.tag(), epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = stream.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}
