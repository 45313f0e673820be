use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::LayerGradients;
use crate::optim::layer_multiplier;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    /// `Δx = −t·g`
    Sgd,
    /// `Δx = μ·Δx_prev − t·g`
    Momentum,
    /// `Δx = μ·Δx_prev − t·∇f(x + μ·Δx_prev)`
    Nag,
    /// `Δx = −t·g / √(Σ g²)`
    Adagrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Nag,
        OptimizerKind::Adagrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Nag => "nag",
            OptimizerKind::Adagrad => "adagrad",
        }
    }

    fn uses_velocity(self) -> bool {
        matches!(self, OptimizerKind::Momentum | OptimizerKind::Nag)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" => Ok(OptimizerKind::Momentum),
            "nag" | "nesterov" => Ok(OptimizerKind::Nag),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Momentum coefficient μ ∈ [0, 1]; ignored by SGD and AdaGrad.
    pub mu: f64,
    /// L2 coefficient added to the gradient before any norm is taken.
    pub weight_decay: f64,
    /// Floor on `‖g_l‖` inside the layer multiplier.
    pub epsilon_norm: f64,
    /// Added to AdaGrad's denominator.
    pub epsilon_div: f64,
    /// Treat each parameter tensor (weights, bias) as its own group for the
    /// layer norm instead of the whole layer.
    pub bias_separate: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            mu: 0.9,
            weight_decay: 0.0,
            epsilon_norm: 1e-12,
            epsilon_div: 1e-12,
            bias_separate: false,
        }
    }
}

/// Maps a group's gradient norm to its learning-rate multiplier. Replaces
/// [`layer_multiplier`] when installed with
/// [`OptimizerState::set_multiplier_fn`].
pub type MultiplierFn = fn(norm: f64, epsilon_norm: f64) -> f64;

/// Mutable state of one optimizer run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    layerwise: bool,
    hp: Hyperparams,
    iteration: u64,
    /// Previous update `Δx^(k−1)` per layer and tensor (momentum, NAG).
    velocity: Vec<Vec<Tensor>>,
    /// Running `Σ g²` per layer and tensor (AdaGrad).
    accumulator: Vec<Vec<Tensor>>,
    multiplier_fn: Option<MultiplierFn>,
    last_multipliers: Vec<f64>,
}

pub fn make_optimizer(kind: OptimizerKind, hp: Hyperparams, layerwise: bool) -> Result<OptimizerState> {
    OptimizerState::new(kind, hp, layerwise)
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, hp: Hyperparams, layerwise: bool) -> Result<Self> {
        if kind.uses_velocity() && !(0.0..=1.0).contains(&hp.mu) {
            return Err(Error::Config(format!("momentum coefficient must be in [0, 1], got {}", hp.mu)));
        }
        if !(hp.weight_decay >= 0.0 && hp.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be >= 0, got {}", hp.weight_decay)));
        }
        if !(hp.epsilon_norm > 0.0 && hp.epsilon_div > 0.0) {
            return Err(Error::Config("epsilon overrides must be positive".into()));
        }
        Ok(OptimizerState {
            kind,
            layerwise,
            hp,
            iteration: 0,
            velocity: Vec::new(),
            accumulator: Vec::new(),
            multiplier_fn: None,
            last_multipliers: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn layerwise(&self) -> bool {
        self.layerwise
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    /// Number of completed steps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn velocity(&self) -> &[Vec<Tensor>] {
        &self.velocity
    }

    pub fn accumulator(&self) -> &[Vec<Tensor>] {
        &self.accumulator
    }

    /// Multipliers applied on the last step, one per norm group (all 1 when
    /// layerwise is off).
    pub fn last_multipliers(&self) -> &[f64] {
        &self.last_multipliers
    }

    /// Overrides the multiplier used when layerwise is on.
    pub fn set_multiplier_fn(&mut self, f: MultiplierFn) {
        self.multiplier_fn = Some(f);
    }

    pub fn needs_lookahead(&self) -> bool {
        self.kind == OptimizerKind::Nag
    }

    /// `x + μ·Δx_prev`, where NAG's gradient must be evaluated. For other
    /// kinds this is `x` itself.
    pub fn lookahead<P: AsRef<[Tensor]>>(&self, params: &[P]) -> Vec<Vec<Tensor>> {
        params
            .iter()
            .enumerate()
            .map(|(l, group)| {
                group
                    .as_ref()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| match self.velocity.get(l).and_then(|v| v.get(i)) {
                        Some(v) if self.needs_lookahead() => {
                            Tensor::axpy(self.hp.mu, v, x).expect("velocity shape")
                        }
                        _ => x.clone(),
                    })
                    .collect()
            })
            .collect()
    }

    /// Applies one update in place and advances the iteration counter.
    ///
    /// For NAG, `grads` must be taken at [`lookahead`](Self::lookahead).
    pub fn step<P: AsMut<[Tensor]>>(&mut self, params: &mut [P], grads: &LayerGradients, t_k: f64) -> Result<()> {
        self.check(params, grads)?;
        let grads = self.regularized(params, grads);
        if self.kind.uses_velocity() && self.velocity.is_empty() {
            self.velocity = zeros_like(params);
        }
        if self.kind == OptimizerKind::Adagrad && self.accumulator.is_empty() {
            self.accumulator = zeros_like(params);
        }
        self.last_multipliers.clear();
        for (l, group) in params.iter_mut().enumerate() {
            let xs = group.as_mut();
            let gs = &grads[l];
            if xs.is_empty() {
                continue;
            }
            if self.hp.bias_separate {
                for i in 0..xs.len() {
                    let norm = gs[i].l2_norm();
                    let t_eff = t_k * self.multiplier(norm);
                    self.update_tensor(l, i, &mut xs[i], &gs[i], t_eff);
                }
            } else {
                let norm = gs.iter().map(Tensor::sum_squares).fold(0.0, |a, b| a + b).sqrt();
                let t_eff = t_k * self.multiplier(norm);
                for i in 0..xs.len() {
                    self.update_tensor(l, i, &mut xs[i], &gs[i], t_eff);
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }

    fn multiplier(&mut self, norm: f64) -> f64 {
        let m = if self.layerwise {
            let f = self.multiplier_fn.unwrap_or(layer_multiplier);
            f(norm, self.hp.epsilon_norm)
        } else {
            1.0
        };
        self.last_multipliers.push(m);
        m
    }

    fn update_tensor(&mut self, l: usize, i: usize, x: &mut Tensor, g: &Tensor, t_eff: f64) {
        let zero_grad = g.data().iter().all(|&v| v == 0.0);
        match self.kind {
            OptimizerKind::Sgd => {
                if zero_grad {
                    return;
                }
                for (xv, &gv) in x.data_mut().iter_mut().zip(g.data()) {
                    *xv -= t_eff * gv;
                }
            }
            OptimizerKind::Momentum | OptimizerKind::Nag => {
                let mu = self.hp.mu;
                let v = &mut self.velocity[l][i];
                for ((xv, vv), &gv) in x.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    let grad_term = if zero_grad { 0.0 } else { t_eff * gv };
                    *vv = mu * *vv - grad_term;
                    *xv += *vv;
                }
            }
            OptimizerKind::Adagrad => {
                if zero_grad {
                    return;
                }
                let eps = self.hp.epsilon_div;
                let acc = &mut self.accumulator[l][i];
                for ((xv, av), &gv) in x.data_mut().iter_mut().zip(acc.data_mut()).zip(g.data()) {
                    *av += gv * gv;
                    *xv -= t_eff * gv / (av.sqrt() + eps);
                }
            }
        }
    }

    fn check<P: AsMut<[Tensor]>>(&self, params: &mut [P], grads: &LayerGradients) -> Result<()> {
        if params.len() != grads.num_layers() {
            return Err(Error::dim("optimizer step", &[params.len()], &[grads.num_layers()]));
        }
        for (l, (p, g)) in params.iter_mut().zip(grads.layers()).enumerate() {
            let p = p.as_mut();
            if p.len() != g.len() {
                return Err(Error::dim("optimizer step", &[p.len()], &[g.len()]));
            }
            for (x, gt) in p.iter().zip(g) {
                if x.shape() != gt.shape() {
                    return Err(Error::dim("optimizer step", x.shape(), gt.shape()));
                }
                if !gt.all_finite() {
                    return Err(Error::Numeric {
                        iteration: Some(self.iteration),
                        message: format!("non-finite gradient in layer {l}"),
                    });
                }
            }
        }
        Ok(())
    }

    fn regularized<P: AsMut<[Tensor]>>(&self, params: &mut [P], grads: &LayerGradients) -> Vec<Vec<Tensor>> {
        let wd = self.hp.weight_decay;
        grads
            .layers()
            .iter()
            .zip(params.iter_mut())
            .map(|(g, p)| {
                g.iter()
                    .zip(p.as_mut().iter())
                    .map(|(gt, x)| {
                        if wd > 0.0 {
                            Tensor::axpy(wd, x, gt).expect("checked shapes")
                        } else {
                            gt.clone()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn zeros_like<P: AsMut<[Tensor]>>(params: &mut [P]) -> Vec<Vec<Tensor>> {
    params
        .iter_mut()
        .map(|p| p.as_mut().iter().map(|t| Tensor::zeros(t.shape())).collect())
        .collect()
}
