use super::Dataset;
use crate::rng;
use crate::tensor::Tensor;

/// Minibatches drawn as consecutive slices of a per-epoch permutation.
///
/// The permutation for epoch `e` depends only on `(seed, e)`. When the batch
/// size does not divide the dataset, the last batch of an epoch is short.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    dataset: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    position: usize,
    order: Vec<usize>,
}

impl<'a> BatchStream<'a> {
    pub fn new(dataset: &'a Dataset, batch_size: usize, seed: u64) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        let order = epoch_permutation(dataset.len(), seed, 0);
        BatchStream {
            dataset,
            batch_size,
            seed,
            epoch: 0,
            position: 0,
            order,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.position >= self.order.len() {
            self.epoch += 1;
            self.position = 0;
            self.order = epoch_permutation(self.dataset.len(), self.seed, self.epoch);
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let out = self.order[self.position..end].to_vec();
        self.position = end;
        out
    }

    /// Inputs and one-hot targets for the next batch.
    pub fn next_batch(&mut self) -> (Tensor, Tensor) {
        let idx = self.next_indices();
        self.dataset.gather(&idx)
    }
}

pub(crate) fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::derived(seed, rng::PURPOSE_SHUFFLE, epoch);
    rng::shuffle(&mut r, &mut order);
    order
}
