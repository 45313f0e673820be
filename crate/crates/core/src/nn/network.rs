use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::layer::{softmax_in_place, Layer, LayerKind, Saved};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Batch mean of `‖y − b‖²` per sample.
    SquaredError,
    /// Batch mean of `−Σ b log softmax(z)` over logits `z`.
    SoftmaxCrossEntropy,
}

/// Gradients grouped by layer, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    layers: Vec<Vec<Tensor>>,
}

impl LayerGradients {
    pub fn new(layers: Vec<Vec<Tensor>>) -> Self {
        LayerGradients { layers }
    }

    pub fn zeros_like(params: &[Vec<Tensor>]) -> Self {
        LayerGradients {
            layers: params
                .iter()
                .map(|g| g.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<Tensor>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<Tensor>> {
        self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// All gradients of layer `l` concatenated in parameter order.
    pub fn flattened(&self, l: usize) -> Vec<f64> {
        self.layers[l]
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// `‖g_l‖₂` over every parameter tensor of layer `l`.
    pub fn layer_norm(&self, l: usize) -> f64 {
        self.layers[l]
            .iter()
            .map(Tensor::sum_squares)
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    pub fn layer_norms(&self) -> Vec<f64> {
        (0..self.layers.len()).map(|l| self.layer_norm(l)).collect()
    }
}

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

/// A feed-forward stack of layers with a loss head.
#[derive(Debug)]
pub struct Network {
    layers: Vec<Layer>,
    loss: Loss,
    input_shape: Vec<usize>,
    id: u64,
    generation: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            layers: self.layers.clone(),
            loss: self.loss,
            input_shape: self.input_shape.clone(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

/// Activations and saved state from one forward call.
#[derive(Debug)]
pub struct ForwardCache {
    network_id: u64,
    generation: u64,
    batch: usize,
    /// `activations[l]` is the input to layer `l`; the last entry is the
    /// network output.
    activations: Vec<Vec<f64>>,
    saved: Vec<Saved>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output (pre-loss) as a `[batch, outputs]` tensor.
    pub fn output(&self) -> Tensor {
        let out = self.activations.last().cloned().unwrap_or_default();
        let width = out.len().checked_div(self.batch).unwrap_or(0);
        Tensor::new(vec![self.batch, width], out).expect("output length")
    }

    /// Opaque per-layer descriptors of ReLU activity and pooling selections.
    pub fn kink_signature(&self, net: &Network) -> Vec<u64> {
        net.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| layer.kink_pattern(&self.activations[l], &self.saved[l]))
            .collect()
    }
}

pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    current: Vec<usize>,
    kinds: Vec<LayerKind>,
    error: Option<Error>,
}

impl NetworkBuilder {
    pub fn new(input_shape: &[usize]) -> Self {
        NetworkBuilder {
            input_shape: input_shape.to_vec(),
            current: input_shape.to_vec(),
            kinds: Vec::new(),
            error: None,
        }
    }

    pub fn layer(mut self, kind: LayerKind) -> Self {
        if self.error.is_none() {
            match kind.output_shape(&self.current) {
                Ok(shape) => {
                    self.current = shape;
                    self.kinds.push(kind);
                }
                Err(e) => self.error = Some(e),
            }
        }
        self
    }

    /// Dense layer sized from the current flattened width.
    pub fn dense(self, outputs: usize) -> Self {
        let inputs = self.current.iter().product();
        self.layer(LayerKind::Dense { inputs, outputs })
    }

    pub fn conv(self, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let in_channels = self.current.first().copied().unwrap_or(0);
        self.layer(LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn max_pool(self, size: usize, stride: usize) -> Self {
        self.layer(LayerKind::MaxPool2d { size, stride })
    }

    pub fn relu(self) -> Self {
        self.layer(LayerKind::Relu)
    }

    pub fn sigmoid(self) -> Self {
        self.layer(LayerKind::Sigmoid)
    }

    pub fn tanh(self) -> Self {
        self.layer(LayerKind::Tanh)
    }

    pub fn softmax(self) -> Self {
        self.layer(LayerKind::Softmax)
    }

    /// Validates shapes and initializes parameters from `seed`.
    pub fn build(self, loss: Loss, seed: u64) -> Result<Network> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let mut rng = rng::derived(seed, rng::PURPOSE_INIT, 0);
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.kinds.len());
        for kind in self.kinds {
            let layer = Layer::new(kind, &shape, &mut rng)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Network {
            layers,
            loss,
            input_shape: self.input_shape,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }
}

impl Network {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss_kind(&self) -> Loss {
        self.loss
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .last()
            .map_or_else(|| self.input_shape.iter().product(), |l| l.out_shape.iter().product())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Indices of layers that own parameters.
    pub fn parametric_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&l| !self.layers[l].params.is_empty())
            .collect()
    }

    /// Snapshot of every layer's parameters (empty for parameter-free layers).
    pub fn params(&self) -> Vec<Vec<Tensor>> {
        self.layers.iter().map(|l| l.params.clone()).collect()
    }

    /// Mutable access to every layer's parameters. Invalidates outstanding
    /// forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<Tensor>> {
        self.generation += 1;
        self.layers.iter_mut().map(|l| &mut l.params).collect()
    }

    /// Replaces all parameters; shapes must match exactly.
    pub fn set_params(&mut self, params: Vec<Vec<Tensor>>) -> Result<()> {
        if params.len() != self.layers.len() {
            return Err(Error::dim("set_params", &[self.layers.len()], &[params.len()]));
        }
        for (layer, group) in self.layers.iter().zip(&params) {
            if layer.params.len() != group.len() {
                return Err(Error::dim("set_params", &[layer.params.len()], &[group.len()]));
            }
            for (p, q) in layer.params.iter().zip(group) {
                if p.shape() != q.shape() {
                    return Err(Error::dim("set_params", p.shape(), q.shape()));
                }
            }
        }
        self.generation += 1;
        for (layer, group) in self.layers.iter_mut().zip(params) {
            layer.params = group;
        }
        Ok(())
    }

    fn batch_of(&self, inputs: &Tensor) -> Result<usize> {
        let per: usize = self.input_shape.iter().product();
        let shape = inputs.shape();
        let batch = shape.first().copied().unwrap_or(0);
        let rest: usize = shape.iter().skip(1).product();
        if shape.len() < 2 || rest != per {
            let mut want = vec![batch];
            want.extend_from_slice(&self.input_shape);
            return Err(Error::dim("network input", shape, &want));
        }
        Ok(batch)
    }

    fn check_targets(&self, targets: &Tensor, batch: usize) -> Result<()> {
        let want = [batch, self.output_width()];
        if targets.shape() != want {
            return Err(Error::dim("targets", targets.shape(), &want));
        }
        Ok(())
    }

    /// Network output without keeping backward state.
    pub fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        let batch = self.batch_of(inputs)?;
        let mut act = inputs.data().to_vec();
        for layer in &self.layers {
            act = layer.forward(&act, batch, false).0;
        }
        Tensor::new(vec![batch, self.output_width()], act)
    }

    pub fn forward(&self, inputs: &Tensor, targets: &Tensor) -> Result<(f64, ForwardCache)> {
        let batch = self.batch_of(inputs)?;
        self.check_targets(targets, batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut saved = Vec::with_capacity(self.layers.len());
        activations.push(inputs.data().to_vec());
        for layer in &self.layers {
            let (y, s) = layer.forward(activations.last().unwrap(), batch, true);
            activations.push(y);
            saved.push(s);
        }
        let loss = self.loss_value(activations.last().unwrap(), targets.data(), batch);
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss {loss}")));
        }
        Ok((
            loss,
            ForwardCache {
                network_id: self.id,
                generation: self.generation,
                batch,
                activations,
                saved,
            },
        ))
    }

    /// Loss only.
    pub fn loss(&self, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
        let out = self.predict(inputs)?;
        let batch = out.shape()[0];
        self.check_targets(targets, batch)?;
        Ok(self.loss_value(out.data(), targets.data(), batch))
    }

    pub fn backward(&self, cache: &ForwardCache, targets: &Tensor) -> Result<LayerGradients> {
        if cache.network_id != self.id || cache.generation != self.generation {
            return Err(Error::Usage(
                "forward cache is stale: parameters changed or cache belongs to another network".into(),
            ));
        }
        let batch = cache.batch;
        self.check_targets(targets, batch)?;
        let mut grads: Vec<Vec<Tensor>> = self
            .layers
            .iter()
            .map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect();
        let mut dy = self.loss_grad(cache.activations.last().unwrap(), targets.data(), batch);
        for l in (0..self.layers.len()).rev() {
            dy = self.layers[l].backward(
                &cache.activations[l],
                &cache.activations[l + 1],
                &dy,
                &cache.saved[l],
                batch,
                &mut grads[l],
            )?;
        }
        Ok(LayerGradients::new(grads))
    }

    pub(crate) fn loss_value(&self, out: &[f64], targets: &[f64], batch: usize) -> f64 {
        if batch == 0 {
            return 0.0;
        }
        let width = out.len() / batch;
        let mut total = 0.0;
        match self.loss {
            Loss::SquaredError => {
                for (y, t) in out.iter().zip(targets) {
                    let d = y - t;
                    total += d * d;
                }
            }
            Loss::SoftmaxCrossEntropy => {
                for (z, t) in out.chunks(width).zip(targets.chunks(width)) {
                    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    for (zi, ti) in z.iter().zip(t) {
                        if *ti != 0.0 {
                            total -= ti * (zi - lse);
                        }
                    }
                }
            }
        }
        total / batch as f64
    }

    fn loss_grad(&self, out: &[f64], targets: &[f64], batch: usize) -> Vec<f64> {
        let scale = 1.0 / batch as f64;
        match self.loss {
            Loss::SquaredError => out
                .iter()
                .zip(targets)
                .map(|(y, t)| 2.0 * (y - t) * scale)
                .collect(),
            Loss::SoftmaxCrossEntropy => {
                let width = out.len() / batch.max(1);
                let mut g = out.to_vec();
                for (row, t) in g.chunks_mut(width).zip(targets.chunks(width)) {
                    softmax_in_place(row);
                    let tsum: f64 = t.iter().sum();
                    for (p, ti) in row.iter_mut().zip(t) {
                        *p = (*p * tsum - ti) * scale;
                    }
                }
                g
            }
        }
    }

    // Used by the finite-difference oracle: run layers `start..` on a
    // precomputed activation and return the loss with the kink signature of
    // the suffix.
    pub(crate) fn forward_suffix(
        &self,
        start: usize,
        act: Vec<f64>,
        targets: &[f64],
        batch: usize,
    ) -> (f64, Vec<u64>) {
        let mut act = act;
        let mut sig = Vec::with_capacity(self.layers.len() - start);
        for layer in &self.layers[start..] {
            let (y, saved) = layer.forward(&act, batch, needs_saved(layer.kind));
            sig.push(layer.kink_pattern(&act, &saved));
            act = y;
        }
        (self.loss_value(&act, targets, batch), sig)
    }

    pub(crate) fn layer_mut(&mut self, l: usize) -> &mut Layer {
        self.generation += 1;
        &mut self.layers[l]
    }
}

fn needs_saved(kind: LayerKind) -> bool {
    matches!(kind, LayerKind::MaxPool2d { .. })
}

/// One-hot rows for class labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (row, &label) in t.data_mut().chunks_mut(classes).zip(labels) {
        row[label] = 1.0;
    }
    t
}
