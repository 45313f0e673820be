use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::layer::LayerKind;
use crate::nn::network::{Loss, Network, NetworkBuilder};

/// LeNet as distributed with Caffe: conv(20, 5×5) → pool 2×2 → conv(50, 5×5)
/// → pool 2×2 → dense(500) → relu → dense(10), on 28×28×1 inputs.
pub fn build_lenet(seed: u64) -> Result<Network> {
    NetworkBuilder::new(&[1, 28, 28])
        .conv(20, 5, 1, 0)
        .max_pool(2, 2)
        .conv(50, 5, 1, 0)
        .max_pool(2, 2)
        .dense(500)
        .relu()
        .dense(10)
        .build(Loss::SoftmaxCrossEntropy, seed)
}

/// Three 5×5 convolutions with 32, 32 and 64 maps, each followed by ReLU and
/// 3×3 max pooling (stride 2), then a 10-way dense layer, on 32×32×3 inputs.
pub fn build_cifar_quick(seed: u64) -> Result<Network> {
    NetworkBuilder::new(&[3, 32, 32])
        .conv(32, 5, 1, 2)
        .relu()
        .max_pool(3, 2)
        .conv(32, 5, 1, 2)
        .relu()
        .max_pool(3, 2)
        .conv(64, 5, 1, 2)
        .relu()
        .max_pool(3, 2)
        .dense(10)
        .build(Loss::SoftmaxCrossEntropy, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn kind(self) -> LayerKind {
        match self {
            Activation::Relu => LayerKind::Relu,
            Activation::Sigmoid => LayerKind::Sigmoid,
            Activation::Tanh => LayerKind::Tanh,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

/// Dense layers with `widths[0]` inputs and `widths[last]` outputs, with the
/// activation between consecutive dense layers.
pub fn build_mlp(widths: &[usize], activation: Activation, loss: Loss, seed: u64) -> Result<Network> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Config(format!("mlp needs at least two positive widths, got {widths:?}")));
    }
    let mut b = NetworkBuilder::new(&[widths[0]]);
    for (i, &w) in widths[1..].iter().enumerate() {
        if i > 0 {
            b = b.layer(activation.kind());
        }
        b = b.dense(w);
    }
    b.build(loss, seed)
}

/// Architecture names accepted by experiment configs: `lenet`,
/// `cifar-quick`, or `mlp:<w0>,<w1>,...[/relu|/sigmoid|/tanh]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    LeNet,
    CifarQuick,
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
    },
}

impl Architecture {
    pub fn build(&self, seed: u64) -> Result<Network> {
        match self {
            Architecture::LeNet => build_lenet(seed),
            Architecture::CifarQuick => build_cifar_quick(seed),
            Architecture::Mlp { widths, activation } => {
                build_mlp(widths, *activation, Loss::SoftmaxCrossEntropy, seed)
            }
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Architecture::LeNet => vec![1, 28, 28],
            Architecture::CifarQuick => vec![3, 32, 32],
            Architecture::Mlp { widths, .. } => vec![widths[0]],
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lenet" => Ok(Architecture::LeNet),
            "cifar-quick" | "cifar_quick" => Ok(Architecture::CifarQuick),
            other => {
                let spec = other
                    .strip_prefix("mlp:")
                    .ok_or_else(|| Error::Config(format!("unknown architecture `{other}`")))?;
                let (widths, act) = match spec.split_once('/') {
                    Some((w, a)) => (w, a),
                    None => (spec, "relu"),
                };
                let activation = match act {
                    "relu" => Activation::Relu,
                    "sigmoid" => Activation::Sigmoid,
                    "tanh" => Activation::Tanh,
                    a => return Err(Error::Config(format!("unknown activation `{a}`"))),
                };
                let widths = widths
                    .split(',')
                    .map(|w| {
                        w.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad mlp width `{w}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if widths.len() < 2 || widths.contains(&0) {
                    return Err(Error::Config(format!("mlp needs at least two positive widths: `{other}`")));
                }
                Ok(Architecture::Mlp { widths, activation })
            }
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::LeNet => write!(f, "lenet"),
            Architecture::CifarQuick => write!(f, "cifar-quick"),
            Architecture::Mlp { widths, activation } => {
                let w: Vec<String> = widths.iter().map(ToString::to_string).collect();
                write!(f, "mlp:{}/{}", w.join(","), activation.name())
            }
        }
    }
}
