use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};

/// Inverse-frequency class weights `N / (2 N_c)`.
pub fn class_weights(corpus: &Corpus) -> Result<[f64; 2]> {
    let [n0, n1] = corpus.label_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid("class weights need both labels present"));
    }
    let n = (n0 + n1) as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

/// One epoch of batches of record indices. Each draw picks a label with
/// probability 1/2 and then a record of that label uniformly, i.e. sampling
/// with replacement at weight `1 / N_y`.
#[derive(Debug, Clone)]
pub struct BalancedBatches {
    by_label: [Vec<usize>; 2],
    batch_size: usize,
    remaining: usize,
    rng: ChaCha8Rng,
}

pub fn balanced_batches(corpus: &Corpus, batch_size: usize, seed: u64) -> Result<BalancedBatches> {
    if batch_size < 2 {
        return Err(Error::invalid(format!("batch_size must be at least 2, got {batch_size}")));
    }
    let mut by_label = [Vec::new(), Vec::new()];
    for (i, r) in corpus.records().iter().enumerate() {
        by_label[r.y as usize].push(i);
    }
    if by_label.iter().any(Vec::is_empty) {
        return Err(Error::invalid("balanced sampling needs both labels present"));
    }
    Ok(BalancedBatches {
        by_label,
        batch_size,
        remaining: corpus.len().div_ceil(batch_size),
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl Iterator for BalancedBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let batch = (0..self.batch_size)
            .map(|_| {
                let pool = &self.by_label[self.rng.random_range(0..2usize)];
                pool[self.rng.random_range(0..pool.len())]
            })
            .collect();
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for BalancedBatches {}
