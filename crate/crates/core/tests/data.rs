mod common;

use std::collections::BTreeSet;

use layerlr::data::{
    load_cifar10_bin, load_mnist_dir, load_mnist_idx, synth_blobs, synth_blobs_with_separation, BatchStream, Split,
    CIFAR_RECORD_BYTES,
};
use layerlr::Error;

#[test]
fn real_mnist_counts_and_ranges() {
    let Some(dir) = common::mnist_dir() else {
        eprintln!("MNIST not found under {}; skipping", common::data_dir("mnist").display());
        return;
    };
    let (train, test) = load_mnist_dir(&dir).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.split(), Split::Train);
    assert_eq!(test.sample_shape(), &[1, 28, 28]);
    for ds in [&train, &test] {
        assert!(ds.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(ds.labels().iter().all(|&l| l < 10));
    }
    // every digit occurs
    assert_eq!(test.labels().iter().copied().collect::<BTreeSet<_>>().len(), 10);
    let again = load_mnist_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )
    .unwrap();
    assert_eq!(again, test);
}

fn idx(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend(d.to_be_bytes());
    }
    v.extend_from_slice(body);
    v
}

#[test]
fn idx_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    let lab = dir.path().join("lab");
    std::fs::write(&img, idx(0x0803, &[2, 2, 2], &[0, 64, 128, 255, 1, 2, 3, 4])).unwrap();
    std::fs::write(&lab, idx(0x0801, &[2], &[7, 1])).unwrap();
    let ds = load_mnist_idx(&img, &lab, Split::Test).unwrap();
    assert_eq!(ds.labels(), &[7, 1]);
    assert_eq!(ds.images().data()[3], 1.0);

    std::fs::write(&lab, idx(0x0802, &[2], &[7, 1])).unwrap();
    let err = load_mnist_idx(&img, &lab, Split::Test).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("0x00000802"), "{err}");
    assert_eq!(err.exit_code(), 3);

    std::fs::write(&lab, idx(0x0801, &[3], &[7, 1, 2])).unwrap();
    let err = load_mnist_idx(&img, &lab, Split::Test).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)));
}

#[test]
fn cifar_record_stride() {
    assert_eq!(CIFAR_RECORD_BYTES, 3073);
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("b.bin");
    let mut bytes = Vec::new();
    for label in 0..10u8 {
        bytes.push(label);
        bytes.extend((0..3072).map(|i| (i % 256) as u8));
    }
    std::fs::write(&f, &bytes).unwrap();
    let ds = load_cifar10_bin(&[&f], Split::Train).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.num_classes(), 10);
    assert_eq!(ds.labels(), (0..10).collect::<Vec<_>>().as_slice());
    assert_eq!(ds.sample_shape(), &[3, 32, 32]);
    bytes.push(0);
    std::fs::write(&f, &bytes).unwrap();
    assert!(matches!(load_cifar10_bin(&[&f], Split::Train), Err(Error::Format { .. })));
}

#[test]
fn far_separated_blobs_are_linearly_separable() {
    let ds = synth_blobs_with_separation(5, 200, 2, 2, 12.0).unwrap();
    // logistic regression by plain gradient descent as the oracle
    let x = ds.images().data();
    let y: Vec<f64> = ds.labels().iter().map(|&l| l as f64).collect();
    let (mut w, mut b) = ([0.0f64; 2], 0.0f64);
    for _ in 0..2000 {
        let mut gw = [0.0; 2];
        let mut gb = 0.0;
        for i in 0..200 {
            let z = w[0] * x[2 * i] + w[1] * x[2 * i + 1] + b;
            let p = 1.0 / (1.0 + (-z).exp());
            gw[0] += (p - y[i]) * x[2 * i] / 200.0;
            gw[1] += (p - y[i]) * x[2 * i + 1] / 200.0;
            gb += (p - y[i]) / 200.0;
        }
        w[0] -= 0.5 * gw[0];
        w[1] -= 0.5 * gw[1];
        b -= 0.5 * gb;
    }
    let correct = (0..200)
        .filter(|&i| ((w[0] * x[2 * i] + w[1] * x[2 * i + 1] + b > 0.0) as usize) == ds.labels()[i])
        .count();
    assert_eq!(correct, 200);
}

#[test]
fn blobs_balance_and_determinism() {
    let a = synth_blobs(9, 100, 10, 10).unwrap();
    for c in 0..10 {
        assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 10);
    }
    assert_eq!(a, synth_blobs(9, 100, 10, 10).unwrap());
}

#[test]
fn stream_epochs_cover_dataset() {
    let ds = synth_blobs(1, 90, 3, 4).unwrap();
    let mut s = BatchStream::new(&ds, 16, 77);
    for epoch in 0..4 {
        let mut seen = Vec::new();
        while seen.len() < ds.len() {
            seen.extend(s.next_indices());
        }
        assert_eq!(s.epoch(), epoch);
        seen.sort_unstable();
        assert_eq!(seen, (0..90).collect::<Vec<_>>());
    }
    let mut a = BatchStream::new(&ds, 90, 3);
    let mut b = BatchStream::new(&ds, 90, 3);
    assert_eq!(a.next_batch(), b.next_batch());
}
