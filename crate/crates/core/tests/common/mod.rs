#![allow(dead_code)]

use std::path::PathBuf;

/// `$LAYERLR_DATA_DIR/<name>` if set, else `data/<name>` at the workspace root.
pub fn data_dir(name: &str) -> PathBuf {
    match std::env::var_os("LAYERLR_DATA_DIR") {
        Some(root) => PathBuf::from(root).join(name),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name),
    }
}

/// MNIST directory when all four IDX files are present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = data_dir("mnist");
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

/// CIFAR-10 directory when the binary batches are present.
pub fn cifar_dir() -> Option<PathBuf> {
    let dir = data_dir("cifar10");
    let mut files: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
    files.push("test_batch.bin".into());
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}
