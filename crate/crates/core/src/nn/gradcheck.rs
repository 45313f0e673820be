//! Central-difference gradient oracle.
//!
//! The perturbed layer's affected outputs are recomputed with plain loops
//! (no im2col, no gemm), and everything after it runs through the ordinary
//! forward path. Nothing here touches the backward code.

use crate::error::Result;
use crate::nn::layer::{Layer, LayerKind};
use crate::nn::network::{LayerGradients, Network};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-6;

/// Denominator floor used by [`relative_error`]. Central differences on an
/// O(1) loss with `eps = 1e-6` carry about `1e-10` of absolute round-off, so
/// gradients far below this floor are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Finite-difference estimate plus a mask of parameters whose ±eps probe
/// crossed a ReLU hinge or changed a max-pool selection.
#[derive(Debug, Clone)]
pub struct FiniteDifference {
    pub grads: LayerGradients,
    pub kinked: Vec<Vec<Vec<bool>>>,
}

pub fn finite_difference_gradient(
    net: &Network,
    inputs: &Tensor,
    targets: &Tensor,
    eps: f64,
) -> Result<LayerGradients> {
    Ok(finite_difference_detailed(net, inputs, targets, eps)?.grads)
}

pub fn finite_difference_detailed(
    net: &Network,
    inputs: &Tensor,
    targets: &Tensor,
    eps: f64,
) -> Result<FiniteDifference> {
    finite_difference_strided(net, inputs, targets, eps, 1)
}

/// Like [`finite_difference_detailed`] but only probes every `stride`-th
/// parameter in flat network order; the rest are left at 0.
pub fn finite_difference_strided(
    net: &Network,
    inputs: &Tensor,
    targets: &Tensor,
    eps: f64,
    stride: usize,
) -> Result<FiniteDifference> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(stride > 0, "stride must be positive");
    let mut flat = 0usize;
    let (_, cache) = net.forward(inputs, targets)?;
    let batch = cache.batch();
    let base_sig = cache.kink_signature(net);
    // Inputs to every layer, re-derived without the cache internals.
    let mut acts = vec![inputs.data().to_vec()];
    for layer in net.layers() {
        let y = layer.forward(acts.last().unwrap(), batch, false).0;
        acts.push(y);
    }
    let mut scratch = net.clone();
    let mut grads = Vec::with_capacity(net.layers().len());
    let mut kinked = Vec::with_capacity(net.layers().len());
    for l in 0..net.layers().len() {
        let n_tensors = net.layers()[l].params().len();
        let mut layer_grads = Vec::with_capacity(n_tensors);
        let mut layer_kinks = Vec::with_capacity(n_tensors);
        for ti in 0..n_tensors {
            let shape = net.layers()[l].params()[ti].shape().to_vec();
            let len = net.layers()[l].params()[ti].len();
            let mut g = vec![0.0; len];
            let mut k = vec![false; len];
            for i in 0..len {
                flat += 1;
                if !(flat - 1).is_multiple_of(stride) {
                    continue;
                }
                let orig = net.layers()[l].params()[ti].data()[i];
                let probe = |value: f64, scratch: &mut Network| {
                    scratch.layer_mut(l).params[ti].data_mut()[i] = value;
                    let layer = &scratch.layers()[l];
                    let out = recompute_affected(layer, &acts[l], &acts[l + 1], ti, i, batch);
                    scratch.forward_suffix(l + 1, out, targets.data(), batch)
                };
                let (up, down) = (orig + eps, orig - eps);
                let (loss_up, sig_up) = probe(up, &mut scratch);
                let (loss_down, sig_down) = probe(down, &mut scratch);
                scratch.layer_mut(l).params[ti].data_mut()[i] = orig;
                g[i] = (loss_up - loss_down) / (up - down);
                k[i] = sig_up[..] != base_sig[l + 1..] || sig_down[..] != base_sig[l + 1..];
            }
            layer_grads.push(Tensor::new(shape, g)?);
            layer_kinks.push(k);
        }
        grads.push(layer_grads);
        kinked.push(layer_kinks);
    }
    Ok(FiniteDifference {
        grads: LayerGradients::new(grads),
        kinked,
    })
}

/// Output of `layer` after changing parameter `(ti, i)`, starting from the
/// unperturbed output `base`. Only outputs that depend on the parameter are
/// recomputed.
fn recompute_affected(
    layer: &Layer,
    x: &[f64],
    base: &[f64],
    ti: usize,
    i: usize,
    batch: usize,
) -> Vec<f64> {
    let mut y = base.to_vec();
    let w = layer.params()[0].data();
    let b = layer.params()[1].data();
    match layer.kind() {
        LayerKind::Dense { inputs, outputs } => {
            let j = if ti == 0 { i / inputs } else { i };
            for s in 0..batch {
                let xs = &x[s * inputs..(s + 1) * inputs];
                let mut acc = b[j];
                for p in 0..inputs {
                    acc += xs[p] * w[j * inputs + p];
                }
                y[s * outputs + j] = acc;
            }
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let per_filter = in_channels * kernel * kernel;
            let o = if ti == 0 { i / per_filter } else { i };
            let (h, wd) = (layer.input_shape()[1], layer.input_shape()[2]);
            let (oh, ow) = (layer.output_shape()[1], layer.output_shape()[2]);
            let in_len = in_channels * h * wd;
            let out_len = out_channels * oh * ow;
            for s in 0..batch {
                let xs = &x[s * in_len..(s + 1) * in_len];
                for r in 0..oh {
                    for c in 0..ow {
                        let mut acc = b[o];
                        for ch in 0..in_channels {
                            for ki in 0..kernel {
                                let row = (r * stride + ki) as isize - padding as isize;
                                if row < 0 || row >= h as isize {
                                    continue;
                                }
                                for kj in 0..kernel {
                                    let col = (c * stride + kj) as isize - padding as isize;
                                    if col < 0 || col >= wd as isize {
                                        continue;
                                    }
                                    acc += w[((o * in_channels + ch) * kernel + ki) * kernel + kj]
                                        * xs[ch * h * wd + row as usize * wd + col as usize];
                                }
                            }
                        }
                        y[s * out_len + o * oh * ow + r * ow + c] = acc;
                    }
                }
            }
        }
        _ => unreachable!("parameter-free layer"),
    }
    y
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// `(layer, tensor, index, analytic, finite_difference)` of the worst entry.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
}

/// Compares `backward` against central differences on every parameter,
/// skipping those flagged as kink-adjacent.
pub fn check_gradients(
    net: &Network,
    inputs: &Tensor,
    targets: &Tensor,
    eps: f64,
) -> Result<GradCheckReport> {
    check_gradients_with(net, inputs, targets, eps, 1, RELATIVE_ERROR_FLOOR)
}

/// [`check_gradients`] on every `stride`-th parameter with a custom
/// relative-error floor.
pub fn check_gradients_with(
    net: &Network,
    inputs: &Tensor,
    targets: &Tensor,
    eps: f64,
    stride: usize,
    floor: f64,
) -> Result<GradCheckReport> {
    let (_, cache) = net.forward(inputs, targets)?;
    let analytic = net.backward(&cache, targets)?;
    let fd = finite_difference_strided(net, inputs, targets, eps, stride)?;
    let mut flat = 0usize;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    for (l, (ga, gf)) in analytic.layers().iter().zip(fd.grads.layers()).enumerate() {
        for (ti, (ta, tf)) in ga.iter().zip(gf).enumerate() {
            for (i, (&a, &f)) in ta.data().iter().zip(tf.data()).enumerate() {
                flat += 1;
                if !(flat - 1).is_multiple_of(stride) {
                    continue;
                }
                if fd.kinked[l][ti][i] {
                    report.skipped_kinks += 1;
                    continue;
                }
                report.checked += 1;
                let err = relative_error(a, f, floor);
                if report.worst.is_none() || err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some((l, ti, i, a, f));
                }
            }
        }
    }
    Ok(report)
}
