//! Feed-forward networks with reverse-mode gradients grouped per layer.

mod arch;
mod gradcheck;
mod layer;
mod network;

pub use arch::{build_cifar_quick, build_lenet, build_mlp, Activation, Architecture};
pub use gradcheck::{
    check_gradients, check_gradients_with, finite_difference_detailed, finite_difference_gradient,
    finite_difference_strided, relative_error,
    FiniteDifference, GradCheckReport, DEFAULT_EPS, RELATIVE_ERROR_FLOOR,
};
pub use layer::{Layer, LayerKind};
pub use network::{one_hot, ForwardCache, LayerGradients, Loss, Network, NetworkBuilder};

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows(t: &crate::tensor::Tensor) -> crate::tensor::Tensor {
    let width = t.shape().last().copied().unwrap_or(1).max(1);
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(width) {
        layer::softmax_in_place(row);
    }
    out
}
