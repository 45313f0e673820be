use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Distance of each class mean from the origin along its own axis.
pub const DEFAULT_SEPARATION: f64 = 4.0;

/// Unit-variance Gaussian clusters with class means at
/// `DEFAULT_SEPARATION · e_c`. Sample `i` belongs to class `i mod classes`.
pub fn synth_blobs(seed: u64, n: usize, classes: usize, dim: usize) -> Result<Dataset> {
    synth_blobs_with_separation(seed, n, classes, dim, DEFAULT_SEPARATION)
}

pub fn synth_blobs_with_separation(
    seed: u64,
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
) -> Result<Dataset> {
    if classes == 0 || !n.is_multiple_of(classes) {
        return Err(Error::Config(format!("n = {n} is not divisible by classes = {classes}")));
    }
    if dim < classes {
        return Err(Error::Config(format!("dim = {dim} must be at least classes = {classes}")));
    }
    let mut rng = rng::derived(seed, rng::PURPOSE_SYNTH, 0);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        for j in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if j == class { separation } else { 0.0 };
            data.push(mean + noise);
        }
        labels.push(class);
    }
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, classes, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_blobs(42, 60, 3, 5).unwrap();
        let b = synth_blobs(42, 60, 3, 5).unwrap();
        assert_eq!(a, b);
        assert!(a
            .images()
            .data()
            .iter()
            .zip(b.images().data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, synth_blobs(43, 60, 3, 5).unwrap());
    }

    #[test]
    fn balanced_classes() {
        let ds = synth_blobs(0, 100, 10, 10).unwrap();
        for c in 0..10 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 10);
        }
    }

    #[test]
    fn precondition_violations() {
        assert!(synth_blobs(0, 101, 10, 10).is_err());
        assert!(synth_blobs(0, 100, 10, 3).is_err());
    }
}
