use std::path::{Path, PathBuf};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "truncated IDX header".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("bad IDX magic 0x{magic:08x}, expected 0x{expected:08x}"),
        });
    }
    Ok(())
}

/// Reads an IDX image file and its label file. Pixels are scaled by 1/255.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_file(ip)?;
    let lab = read_file(lp)?;
    check_magic(&img, IDX_IMAGES_MAGIC, ip)?;
    check_magic(&lab, IDX_LABELS_MAGIC, lp)?;

    let n = be_u32(&img, 4, ip)? as usize;
    let rows = be_u32(&img, 8, ip)? as usize;
    let cols = be_u32(&img, 12, ip)? as usize;
    let n_labels = be_u32(&lab, 4, lp)? as usize;
    if n != n_labels {
        return Err(Error::Consistency(format!(
            "{} holds {n} images but {} holds {n_labels} labels",
            ip.display(),
            lp.display()
        )));
    }
    let pixels = &img[16..];
    if pixels.len() != n * rows * cols {
        return Err(Error::Format {
            path: ip.to_path_buf(),
            message: format!("expected {} pixel bytes, found {}", n * rows * cols, pixels.len()),
        });
    }
    let labels = &lab[8..];
    if labels.len() != n {
        return Err(Error::Format {
            path: lp.to_path_buf(),
            message: format!("expected {n} label bytes, found {}", labels.len()),
        });
    }
    let data: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], data)?;
    Dataset::new(images, labels.iter().map(|&l| usize::from(l)).collect(), 10, split)
}

/// Loads `train-*` and `t10k-*` IDX files from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let train = load_mnist_idx(p("train-images-idx3-ubyte"), p("train-labels-idx1-ubyte"), Split::Train)?;
    let test = load_mnist_idx(p("t10k-images-idx3-ubyte"), p("t10k-labels-idx1-ubyte"), Split::Test)?;
    Ok((train, test))
}
