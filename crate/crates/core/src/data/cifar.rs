use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One label byte followed by 32×32×3 channel-planar pixel bytes.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;

/// Reads CIFAR-10 binary batch files in order. Pixels are scaled by 1/255.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P], split: Split) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!(
                    "length {} is not a positive multiple of the {CIFAR_RECORD_BYTES}-byte record",
                    bytes.len()
                ),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = usize::from(record[0]);
            if label >= 10 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("label byte {label} outside 0..10"),
                });
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new(Tensor::new(vec![n, 3, 32, 32], data)?, labels, 10, split)
}

/// Loads `data_batch_{1..5}.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train: Vec<_> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let train = load_cifar10_bin(&train, Split::Train)?;
    let test = load_cifar10_bin(&[dir.join("test_batch.bin")], Split::Test)?;
    Ok((train, test))
}

/// Per-channel means of a training split, subtracted from every split.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMeans(pub Vec<f64>);

impl ChannelMeans {
    pub fn from_train(ds: &Dataset) -> ChannelMeans {
        let channels = ds.sample_shape()[0];
        let plane: usize = ds.sample_shape()[1..].iter().product();
        let mut sums = vec![0.0; channels];
        for sample in ds.images().data().chunks(channels * plane) {
            for (c, px) in sample.chunks(plane).enumerate() {
                sums[c] += px.iter().sum::<f64>();
            }
        }
        let count = (ds.len() * plane).max(1) as f64;
        ChannelMeans(sums.into_iter().map(|s| s / count).collect())
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let channels = self.0.len();
        let plane: usize = ds.sample_shape()[1..].iter().product();
        for sample in ds.images_mut().data_mut().chunks_mut(channels * plane) {
            for (c, px) in sample.chunks_mut(plane).enumerate() {
                for v in px {
                    *v -= self.0[c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, CIFAR_RECORD_BYTES - 1));
        r
    }

    #[test]
    fn reads_records_across_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        std::fs::write(&a, [record(3, 255), record(9, 0)].concat()).unwrap();
        std::fs::write(&b, record(0, 51)).unwrap();
        let ds = load_cifar10_bin(&[&a, &b], Split::Train).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[3, 9, 0]);
        assert_eq!(ds.num_classes(), 10);
        assert_eq!(ds.sample_shape(), &[3, 32, 32]);
        assert!(ds.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let means = ChannelMeans::from_train(&ds);
        assert!((means.0[0] - (1.0 + 0.0 + 0.2) / 3.0).abs() < 1e-12);
        let mut centered = ds.clone();
        means.apply(&mut centered);
        let total: f64 = centered.images().data().iter().sum();
        assert!(total.abs() < 1e-9);
    }

    #[test]
    fn partial_record_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let mut bytes = record(1, 1);
        bytes.pop();
        std::fs::write(&a, bytes).unwrap();
        let err = load_cifar10_bin(&[&a], Split::Test).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        std::fs::write(&a, record(10, 1)).unwrap();
        assert!(load_cifar10_bin(&[&a], Split::Test).is_err());
    }
}
