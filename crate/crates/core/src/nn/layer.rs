use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `y = x · Wᵀ + b`, with `W` stored as `[outputs, inputs]`. Inputs of any
    /// rank are flattened per sample.
    Dense { inputs: usize, outputs: usize },
    /// NCHW convolution. `W` is `[out_channels, in_channels, kernel, kernel]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Max pooling with ceil-mode output size; edge windows are clipped.
    MaxPool2d { size: usize, stride: usize },
    Relu,
    Sigmoid,
    Tanh,
    /// Softmax over the last axis.
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Tanh => "tanh",
            LayerKind::Softmax => "softmax",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(Error::dim("dense input", input, &[inputs]));
                }
                Ok(vec![outputs])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = chw(input, "conv2d input")?;
                if c != in_channels || stride == 0 || kernel == 0 {
                    return Err(Error::dim("conv2d input", input, &[in_channels]));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::dim("conv2d kernel", input, &[kernel, kernel]));
                }
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![out_channels, oh, ow])
            }
            LayerKind::MaxPool2d { size, stride } => {
                let (c, h, w) = chw(input, "maxpool input")?;
                if h < size || w < size || stride == 0 || size == 0 {
                    return Err(Error::dim("maxpool window", input, &[size, size]));
                }
                Ok(vec![c, pooled_extent(h, size, stride), pooled_extent(w, size, stride)])
            }
            LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh | LayerKind::Softmax => {
                Ok(input.to_vec())
            }
        }
    }

    /// Parameter shapes in storage order (weights, then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` for the symmetric uniform initializer.
    fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerKind::Dense { inputs, outputs } => Some((inputs, outputs)),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((in_channels * kernel * kernel, out_channels * kernel * kernel)),
            _ => None,
        }
    }
}

fn chw(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::dim(op, shape, &[0, 0, 0])),
    }
}

fn pooled_extent(len: usize, size: usize, stride: usize) -> usize {
    let mut out = (len - size).div_ceil(stride) + 1;
    if (out - 1) * stride >= len {
        out -= 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub(crate) kind: LayerKind,
    pub(crate) in_shape: Vec<usize>,
    pub(crate) out_shape: Vec<usize>,
    pub(crate) params: Vec<Tensor>,
}

/// Per-layer data saved by the forward pass for use in backward.
#[derive(Debug, Clone)]
pub(crate) enum Saved {
    None,
    /// im2col buffers, one `[c·k·k, oh·ow]` block per sample, concatenated.
    Columns(Vec<f64>),
    /// Flat input index of the selected element for each pooled output.
    Argmax(Vec<usize>),
}

impl Layer {
    pub(crate) fn new(kind: LayerKind, in_shape: &[usize], rng: &mut Rng) -> Result<Layer> {
        let out_shape = kind.output_shape(in_shape)?;
        let params = match kind.fans() {
            Some((fan_in, fan_out)) => {
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let shapes = kind.param_shapes();
                let mut w = Tensor::zeros(&shapes[0]);
                for v in w.data_mut() {
                    *v = rng::symmetric(rng, r);
                }
                vec![w, Tensor::zeros(&shapes[1])]
            }
            None => Vec::new(),
        };
        Ok(Layer {
            kind,
            in_shape: in_shape.to_vec(),
            out_shape,
            params,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// Forward pass over a batch stored as `batch × in_len` values.
    pub(crate) fn forward(&self, x: &[f64], batch: usize, save: bool) -> (Vec<f64>, Saved) {
        let in_len = self.in_len();
        let out_len = self.out_len();
        debug_assert_eq!(x.len(), batch * in_len);
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let mut y = Vec::with_capacity(batch * outputs);
                for _ in 0..batch {
                    y.extend_from_slice(b);
                }
                gemm(batch, inputs, outputs, x, (inputs as isize, 1), w, (1, inputs as isize), 1.0, &mut y);
                (y, Saved::None)
            }
            LayerKind::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (self.out_shape[1], self.out_shape[2]);
                let col_rows = c * kernel * kernel;
                let plane = oh * ow;
                let weights = self.params[0].data();
                let bias = self.params[1].data();
                let mut y = vec![0.0; batch * out_len];
                let mut cols_all = if save { vec![0.0; batch * col_rows * plane] } else { Vec::new() };
                let mut scratch = if save { Vec::new() } else { vec![0.0; col_rows * plane] };
                let geom = ConvGeom { c, h, w, kernel, stride, padding, oh, ow };
                for s in 0..batch {
                    let cols: &mut [f64] = if save {
                        &mut cols_all[s * col_rows * plane..(s + 1) * col_rows * plane]
                    } else {
                        &mut scratch
                    };
                    im2col(&x[s * in_len..(s + 1) * in_len], &geom, cols);
                    let ys = &mut y[s * out_len..(s + 1) * out_len];
                    for (o, row) in ys.chunks_mut(plane).enumerate() {
                        row.fill(bias[o]);
                    }
                    gemm(
                        out_channels,
                        col_rows,
                        plane,
                        weights,
                        (col_rows as isize, 1),
                        cols,
                        (plane as isize, 1),
                        1.0,
                        ys,
                    );
                }
                let saved = if save { Saved::Columns(cols_all) } else { Saved::None };
                (y, saved)
            }
            LayerKind::MaxPool2d { size, stride } => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (self.out_shape[1], self.out_shape[2]);
                let mut y = Vec::with_capacity(batch * out_len);
                let mut arg = Vec::with_capacity(if save { batch * out_len } else { 0 });
                for s in 0..batch {
                    for ch in 0..c {
                        let base = s * in_len + ch * h * w;
                        for i in 0..oh {
                            let (r0, r1) = (i * stride, (i * stride + size).min(h));
                            for j in 0..ow {
                                let (c0, c1) = (j * stride, (j * stride + size).min(w));
                                let mut best = base + r0 * w + c0;
                                for r in r0..r1 {
                                    for q in c0..c1 {
                                        let idx = base + r * w + q;
                                        if x[idx] > x[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                y.push(x[best]);
                                if save {
                                    arg.push(best);
                                }
                            }
                        }
                    }
                }
                let saved = if save { Saved::Argmax(arg) } else { Saved::None };
                (y, saved)
            }
            LayerKind::Relu => (x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), Saved::None),
            LayerKind::Sigmoid => (x.iter().map(|&v| sigmoid(v)).collect(), Saved::None),
            LayerKind::Tanh => (x.iter().map(|&v| v.tanh()).collect(), Saved::None),
            LayerKind::Softmax => {
                let width = *self.in_shape.last().unwrap_or(&1);
                let mut y = x.to_vec();
                for row in y.chunks_mut(width) {
                    softmax_in_place(row);
                }
                (y, Saved::None)
            }
        }
    }

    /// Backward pass. Returns the gradient with respect to the layer input and
    /// fills `param_grads` (same shapes as `params`).
    pub(crate) fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        saved: &Saved,
        batch: usize,
        param_grads: &mut [Tensor],
    ) -> Result<Vec<f64>> {
        let in_len = self.in_len();
        let out_len = self.out_len();
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let w = self.params[0].data();
                let (gw, gb) = split_two(param_grads);
                // dW = dyᵀ · x
                gemm(outputs, batch, inputs, dy, (1, outputs as isize), x, (inputs as isize, 1), 0.0, gw.data_mut());
                let gbd = gb.data_mut();
                gbd.fill(0.0);
                for row in dy.chunks(outputs) {
                    for (g, &d) in gbd.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                let mut dx = vec![0.0; batch * inputs];
                gemm(batch, outputs, inputs, dy, (outputs as isize, 1), w, (inputs as isize, 1), 0.0, &mut dx);
                Ok(dx)
            }
            LayerKind::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let cols_all = match saved {
                    Saved::Columns(c) => c,
                    _ => return Err(Error::Usage("conv2d backward without saved columns".into())),
                };
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (self.out_shape[1], self.out_shape[2]);
                let geom = ConvGeom { c, h, w, kernel, stride, padding, oh, ow };
                let col_rows = c * kernel * kernel;
                let plane = oh * ow;
                let weights = self.params[0].data();
                let (gw, gb) = split_two(param_grads);
                gw.fill(0.0);
                gb.fill(0.0);
                let mut dx = vec![0.0; batch * in_len];
                let mut dcols = vec![0.0; col_rows * plane];
                for s in 0..batch {
                    let dys = &dy[s * out_len..(s + 1) * out_len];
                    let cols = &cols_all[s * col_rows * plane..(s + 1) * col_rows * plane];
                    gemm(
                        out_channels,
                        plane,
                        col_rows,
                        dys,
                        (plane as isize, 1),
                        cols,
                        (1, plane as isize),
                        1.0,
                        gw.data_mut(),
                    );
                    for (g, row) in gb.data_mut().iter_mut().zip(dys.chunks(plane)) {
                        *g += row.iter().sum::<f64>();
                    }
                    gemm(
                        col_rows,
                        out_channels,
                        plane,
                        weights,
                        (1, col_rows as isize),
                        dys,
                        (plane as isize, 1),
                        0.0,
                        &mut dcols,
                    );
                    col2im(&dcols, &geom, &mut dx[s * in_len..(s + 1) * in_len]);
                }
                Ok(dx)
            }
            LayerKind::MaxPool2d { .. } => {
                let arg = match saved {
                    Saved::Argmax(a) => a,
                    _ => return Err(Error::Usage("maxpool backward without saved argmax".into())),
                };
                let mut dx = vec![0.0; batch * in_len];
                for (&idx, &d) in arg.iter().zip(dy) {
                    dx[idx] += d;
                }
                Ok(dx)
            }
            LayerKind::Relu => Ok(x
                .iter()
                .zip(dy)
                .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                .collect()),
            LayerKind::Sigmoid => Ok(y.iter().zip(dy).map(|(&s, &d)| d * s * (1.0 - s)).collect()),
            LayerKind::Tanh => Ok(y.iter().zip(dy).map(|(&t, &d)| d * (1.0 - t * t)).collect()),
            LayerKind::Softmax => {
                let width = *self.in_shape.last().unwrap_or(&1);
                let mut dx = vec![0.0; y.len()];
                for ((yr, dyr), dxr) in y.chunks(width).zip(dy.chunks(width)).zip(dx.chunks_mut(width)) {
                    let dot: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                    for ((o, &p), &d) in dxr.iter_mut().zip(yr).zip(dyr) {
                        *o = p * (d - dot);
                    }
                }
                Ok(dx)
            }
        }
    }

    /// Bits describing which side of every ReLU hinge and max-pool selection
    /// the current input falls on.
    pub(crate) fn kink_pattern(&self, x: &[f64], saved: &Saved) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        match (self.kind, saved) {
            (LayerKind::Relu, _) => {
                for chunk in x.chunks(64) {
                    let mut bits = 0u64;
                    for (i, &v) in chunk.iter().enumerate() {
                        if v > 0.0 {
                            bits |= 1 << i;
                        }
                    }
                    bits.hash(&mut h);
                }
            }
            (LayerKind::MaxPool2d { .. }, Saved::Argmax(a)) => a.hash(&mut h),
            _ => {}
        }
        h.finish()
    }
}

fn split_two(grads: &mut [Tensor]) -> (&mut Tensor, &mut Tensor) {
    let (a, b) = grads.split_at_mut(1);
    (&mut a[0], &mut b[0])
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Unfolds one `[c, h, w]` sample into `[c·k·k, oh·ow]` columns.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let plane = g.oh * g.ow;
    let mut row = 0;
    for ch in 0..g.c {
        let src = &x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for i in 0..g.oh {
                    let r = (i * g.stride + ki) as isize - g.padding as isize;
                    let out = &mut dst[i * g.ow..(i + 1) * g.ow];
                    if r < 0 || r >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src_row = &src[r as usize * g.w..(r as usize + 1) * g.w];
                    for (j, o) in out.iter_mut().enumerate() {
                        let q = (j * g.stride + kj) as isize - g.padding as isize;
                        *o = if q < 0 || q >= g.w as isize { 0.0 } else { src_row[q as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a `[c, h, w]` sample.
fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let plane = g.oh * g.ow;
    let mut row = 0;
    for ch in 0..g.c {
        let dst = &mut dx[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let src = &cols[row * plane..(row + 1) * plane];
                for i in 0..g.oh {
                    let r = (i * g.stride + ki) as isize - g.padding as isize;
                    if r < 0 || r >= g.h as isize {
                        continue;
                    }
                    for j in 0..g.ow {
                        let q = (j * g.stride + kj) as isize - g.padding as isize;
                        if q >= 0 && q < g.w as isize {
                            dst[r as usize * g.w + q as usize] += src[i * g.ow + j];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(kind: LayerKind, in_shape: &[usize]) -> Layer {
        Layer::new(kind, in_shape, &mut rng::seeded(0)).unwrap()
    }

    #[test]
    fn pooled_extent_uses_ceil_mode() {
        assert_eq!(pooled_extent(32, 3, 2), 16);
        assert_eq!(pooled_extent(16, 3, 2), 8);
        assert_eq!(pooled_extent(8, 3, 2), 4);
        assert_eq!(pooled_extent(24, 2, 2), 12);
        assert_eq!(pooled_extent(3, 3, 2), 1);
    }

    #[test]
    fn conv_matches_direct_loops() {
        let kind = LayerKind::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let mut l = layer(kind, &[2, 5, 6]);
        let mut r = rng::seeded(4);
        for v in l.params[1].data_mut() {
            *v = rng::symmetric(&mut r, 1.0);
        }
        let x: Vec<f64> = (0..2 * 60).map(|_| rng::symmetric(&mut r, 1.0)).collect();
        let (y, _) = l.forward(&x, 2, true);
        let (oh, ow) = (l.out_shape[1], l.out_shape[2]);
        assert_eq!((oh, ow), (3, 3));
        let w = l.params[0].data();
        let b = l.params[1].data();
        for s in 0..2 {
            for o in 0..3 {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b[o];
                        for c in 0..2 {
                            for ki in 0..3 {
                                for kj in 0..3 {
                                    let r = (i * 2 + ki) as isize - 1;
                                    let q = (j * 2 + kj) as isize - 1;
                                    if r < 0 || q < 0 || r >= 5 || q >= 6 {
                                        continue;
                                    }
                                    acc += w[((o * 2 + c) * 3 + ki) * 3 + kj]
                                        * x[s * 60 + c * 30 + r as usize * 6 + q as usize];
                                }
                            }
                        }
                        let got = y[s * 27 + o * 9 + i * 3 + j];
                        assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_selects_first_maximum() {
        let l = layer(LayerKind::MaxPool2d { size: 2, stride: 2 }, &[1, 2, 4]);
        let x = vec![1.0, 3.0, 5.0, 5.0, 3.0, 2.0, 0.0, -1.0];
        let (y, saved) = l.forward(&x, 1, true);
        assert_eq!(y, vec![3.0, 5.0]);
        match saved {
            Saved::Argmax(a) => assert_eq!(a, vec![1, 2]),
            _ => panic!("expected argmax"),
        }
    }

    #[test]
    fn parameter_free_layers_own_nothing() {
        for kind in [
            LayerKind::Relu,
            LayerKind::Sigmoid,
            LayerKind::Tanh,
            LayerKind::Softmax,
            LayerKind::MaxPool2d { size: 2, stride: 2 },
        ] {
            assert!(layer(kind, &[1, 4, 4]).params.is_empty());
        }
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn bad_input_shapes_rejected() {
        let dense = LayerKind::Dense { inputs: 4, outputs: 2 };
        assert!(dense.output_shape(&[5]).is_err());
        let conv = LayerKind::Conv2d {
            in_channels: 3,
            out_channels: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(conv.output_shape(&[1, 28, 28]).is_err());
        assert!(conv.output_shape(&[3, 4, 4]).is_err());
        assert!(conv.output_shape(&[784]).is_err());
    }
}
