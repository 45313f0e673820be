//! Update rules and the layer-specific learning-rate wrapper.
//!
//! With layerwise mode on, every optimizer replaces its global rate `t^(k)`
//! with `t^(k) · layer_multiplier(‖g_l‖₂)` for each layer `l`, where `g_l` is
//! the current minibatch gradient of that layer. Nothing from earlier
//! iterations enters the multiplier. For momentum and NAG only the gradient
//! term is scaled; for AdaGrad the scaled rate sits over the usual
//! per-parameter denominator.

mod optimizer;
mod schedule;

pub use optimizer::{make_optimizer, Hyperparams, MultiplierFn, OptimizerKind, OptimizerState};
pub use schedule::{schedule_rate, LrSchedule};

pub const DEFAULT_EPSILON_NORM: f64 = 1e-12;

/// `1 + ln(1 + 1/max(norm, epsilon_norm))`.
///
/// Greater than 1 for every finite norm, strictly decreasing, and tends to 1
/// as the norm grows.
pub fn layer_multiplier(norm: f64, epsilon_norm: f64) -> f64 {
    1.0 + (1.0 / norm.max(epsilon_norm)).ln_1p()
}
