//! Layer-specific adaptive learning rates for first-order optimizers.
//!
//! Each layer `l` gets the step size `t · (1 + ln(1 + 1/‖g_l‖₂))`, computed
//! from the current minibatch gradient of that layer only. The multiplier is
//! close to 1 for layers with large gradients and grows as a layer's
//! gradient shrinks, which speeds up shallow layers and flat saddle regions.
//!
//! The crate provides the update rules ([`optim`]), a small dense/conv
//! backprop engine ([`nn`]), dataset readers ([`data`]), analytic test
//! landscapes ([`landscape`]) and an experiment runner ([`harness`]).

pub mod data;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
