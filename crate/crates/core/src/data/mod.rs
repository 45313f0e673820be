//! Datasets and deterministic minibatch streams.

mod cifar;
mod mnist;
mod stream;
mod synth;

pub use cifar::{load_cifar10_bin, load_cifar10_dir, ChannelMeans, CIFAR_RECORD_BYTES};
pub use mnist::{load_mnist_dir, load_mnist_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use stream::BatchStream;
pub use synth::{synth_blobs, synth_blobs_with_separation, DEFAULT_SEPARATION};

use crate::error::{Error, Result};
use crate::nn::one_hot;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images (or feature vectors) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        let n = images.shape().first().copied().unwrap_or(0);
        if images.shape().len() < 2 || n != labels.len() {
            return Err(Error::Consistency(format!(
                "{} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Consistency("num_classes must be positive".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Per-sample shape, e.g. `[1, 28, 28]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Inputs and one-hot targets for the given sample indices.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let len = self.sample_len();
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(&src[i * len..(i + 1) * len]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new(shape, data).expect("gather shape"),
            one_hot(&labels, self.num_classes),
        )
    }

    /// Contiguous samples `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> (Tensor, &[usize]) {
        let len = self.sample_len();
        let mut shape = vec![end - start];
        shape.extend_from_slice(self.sample_shape());
        let data = self.images.data()[start * len..end * len].to_vec();
        (Tensor::new(shape, data).expect("slice shape"), &self.labels[start..end])
    }

    /// First `n` samples.
    pub fn truncate(mut self, n: usize) -> Self {
        if n >= self.len() {
            return self;
        }
        let len = self.sample_len();
        let mut shape = self.images.shape().to_vec();
        shape[0] = n;
        let data = self.images.data()[..n * len].to_vec();
        self.images = Tensor::new(shape, data).expect("truncate shape");
        self.labels.truncate(n);
        self
    }

    pub(crate) fn images_mut(&mut self) -> &mut Tensor {
        &mut self.images
    }
}
