use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_shape, Result};
use crate::rng;
use crate::tensor::{gemm, Tensor};

/// Per-sample feature layout flowing between layers. Images are stored
/// height-major, channels last (HWC).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Flat(usize),
    Image { height: usize, width: usize, channels: usize },
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Flat(n) => n,
            FeatureShape::Image { height, width, channels } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Square kernel, no padding.
    Conv2d {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    /// 2×2 window, stride 2, trailing odd row/column dropped.
    MaxPool2,
    Relu,
    Flatten,
}

impl LayerSpec {
    fn output_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs }, FeatureShape::Flat(n)) => {
                if inputs != n {
                    bail_shape!("dense layer expects {} inputs, previous layer gives {}", inputs, n);
                }
                if outputs == 0 {
                    bail_shape!("dense layer with zero outputs");
                }
                Ok(FeatureShape::Flat(outputs))
            }
            (LayerSpec::Dense { .. }, FeatureShape::Image { .. }) => {
                bail_shape!("dense layer needs a flat input; insert a flatten layer")
            }
            (
                LayerSpec::Conv2d { kernel, in_channels, out_channels, stride },
                FeatureShape::Image { height, width, channels },
            ) => {
                if channels != in_channels {
                    bail_shape!("conv expects {} channels, input has {}", in_channels, channels);
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    bail_shape!("conv kernel, stride and out_channels must be positive");
                }
                if kernel > height || kernel > width {
                    bail_shape!("conv kernel {} larger than {}x{} input", kernel, height, width);
                }
                Ok(FeatureShape::Image {
                    height: (height - kernel) / stride + 1,
                    width: (width - kernel) / stride + 1,
                    channels: out_channels,
                })
            }
            (LayerSpec::Conv2d { .. }, FeatureShape::Flat(_)) => {
                bail_shape!("conv layer needs an image input")
            }
            (LayerSpec::MaxPool2, FeatureShape::Image { height, width, channels }) => {
                if height < 2 || width < 2 {
                    bail_shape!("max-pool on {}x{} input", height, width);
                }
                Ok(FeatureShape::Image { height: height / 2, width: width / 2, channels })
            }
            (LayerSpec::MaxPool2, FeatureShape::Flat(_)) => bail_shape!("max-pool needs an image input"),
            (LayerSpec::Relu, s) => Ok(s),
            (LayerSpec::Flatten, s) => Ok(FeatureShape::Flat(s.len())),
        }
    }

    /// (weight, bias) lengths.
    fn parameter_lens(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs, outputs),
            LayerSpec::Conv2d { kernel, in_channels, out_channels, .. } => {
                (kernel * kernel * in_channels * out_channels, out_channels)
            }
            _ => (0, 0),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { kernel, in_channels, .. } => kernel * kernel * in_channels,
            _ => 0,
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

/// Weight and bias of one layer. Dense weights are `inputs × outputs`;
/// conv weights are `(ky, kx, in_channel) × out_channel`. Both row-major.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Parameters {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    spec: LayerSpec,
    input: FeatureShape,
    output: FeatureShape,
    params: Parameters,
}

/// A feed-forward stack of layers ending in a dense layer whose width is
/// the number of predicted classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input: FeatureShape,
    layers: Vec<Layer>,
}

/// Per-layer parameter gradients, aligned with the network's layers
/// (parameter-free layers hold empty vectors).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Parameters>,
}

/// Activations recorded by [`Network::forward_trace`] for the backward pass.
pub struct Trace {
    batch: usize,
    /// Input to every layer, followed by the logits.
    activations: Vec<Vec<f64>>,
    aux: Vec<Aux>,
}

enum Aux {
    None,
    Cols(Vec<f64>),
    Argmax(Vec<u32>),
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Network {
    /// Builds a network with He-uniform weights (`U(±√(6/fan_in))`) and zero
    /// biases drawn from a stream keyed by `seed`.
    pub fn new(input: FeatureShape, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(input, specs)?;
        let mut rng = rng::seeded(seed);
        for layer in &mut net.layers {
            let fan_in = layer.spec.fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = libm::sqrt(6.0 / fan_in as f64);
            for w in &mut layer.params.weight {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Same topology with every parameter set to zero.
    pub fn zeroed(input: FeatureShape, specs: &[LayerSpec]) -> Result<Self> {
        if input.is_empty() {
            bail_shape!("network input must be non-empty");
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for spec in specs {
            let out = spec.output_shape(shape)?;
            let (wl, bl) = spec.parameter_lens();
            layers.push(Layer {
                spec: *spec,
                input: shape,
                output: out,
                params: Parameters { weight: vec![0.0; wl], bias: vec![0.0; bl] },
            });
            shape = out;
        }
        match layers.iter().rev().find(|l| l.spec.has_parameters()) {
            Some(Layer { spec: LayerSpec::Dense { .. }, .. }) => {}
            _ => bail_shape!("the last parameterised layer must be dense"),
        }
        if !matches!(shape, FeatureShape::Flat(_)) {
            bail_shape!("network must end with a flat output");
        }
        Ok(Self { input, layers })
    }

    /// Rebuilds a network from stored parameters (one entry per layer).
    pub fn from_parameters(input: FeatureShape, specs: &[LayerSpec], params: Vec<Parameters>) -> Result<Self> {
        let mut net = Self::zeroed(input, specs)?;
        if params.len() != net.layers.len() {
            bail_shape!("{} parameter blocks for {} layers", params.len(), net.layers.len());
        }
        for (i, (layer, p)) in net.layers.iter_mut().zip(params).enumerate() {
            if p.weight.len() != layer.params.weight.len() || p.bias.len() != layer.params.bias.len() {
                bail_shape!("layer {} parameter lengths do not match {:?}", i, layer.spec);
            }
            if p.weight.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                bail_arg!("layer {} has non-finite parameters", i);
            }
            layer.params = p;
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> FeatureShape {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output.len()).unwrap_or(0)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameters> {
        self.layers.iter().map(|l| &l.params)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Parameters> {
        self.layers.iter_mut().map(|l| &mut l.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.row_len() != self.input.len() {
            bail_shape!(
                "batch rows have {} features, network expects {} ({:?})",
                batch.row_len(),
                self.input.len(),
                self.input
            );
        }
        Ok(batch.rows())
    }

    /// Logits, `B × output_dim`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let mut x = batch.data().to_vec();
        for layer in &self.layers {
            let (y, _) = layer.forward(&x, b, false);
            x = y;
        }
        Ok(Tensor::from_parts(vec![b, self.output_dim()], x))
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_trace(&self, batch: &Tensor) -> Result<Trace> {
        let b = self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        activations.push(batch.data().to_vec());
        for layer in &self.layers {
            let (y, a) = layer.forward(activations.last().unwrap(), b, true);
            activations.push(y);
            aux.push(a);
        }
        Ok(Trace { batch: b, activations, aux })
    }

    /// Reverse pass. `d_logits` is the gradient of the scalar objective with
    /// respect to the traced logits (`B × output_dim`). The input gradient is
    /// only computed when `want_input` is set.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64], want_input: bool) -> Result<(Gradients, Option<Tensor>)> {
        let b = trace.batch;
        if d_logits.len() != b * self.output_dim() {
            bail_shape!("d_logits has {} values, expected {}", d_logits.len(), b * self.output_dim());
        }
        let mut grads: Vec<Parameters> = vec![Parameters::default(); self.layers.len()];
        let mut upstream = d_logits.to_vec();
        let first_param = self.layers.iter().position(|l| l.spec.has_parameters()).unwrap_or(0);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = want_input || i > first_param;
            let (dx, g) = layer.backward(&trace.activations[i], &trace.aux[i], &upstream, b, need_dx);
            grads[i] = g;
            if !need_dx {
                break;
            }
            upstream = dx;
        }
        let input = if want_input {
            Some(Tensor::from_parts(core::iter::once(b).chain(shape_tail(self.input)).collect(), upstream))
        } else {
            None
        };
        Ok((Gradients { layers: grads }, input))
    }
}

fn shape_tail(s: FeatureShape) -> Vec<usize> {
    match s {
        FeatureShape::Flat(n) => vec![n],
        FeatureShape::Image { height, width, channels } => vec![height, width, channels],
    }
}

fn image_dims(s: FeatureShape) -> (usize, usize, usize) {
    match s {
        FeatureShape::Image { height, width, channels } => (height, width, channels),
        FeatureShape::Flat(n) => (1, 1, n),
    }
}

impl Layer {
    fn forward(&self, x: &[f64], b: usize, record: bool) -> (Vec<f64>, Aux) {
        let out_len = self.output.len();
        match self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                let mut y = vec![0.0; b * outputs];
                for row in y.chunks_exact_mut(outputs) {
                    row.copy_from_slice(&self.params.bias);
                }
                gemm(b, inputs, outputs, 1.0, x, false, &self.params.weight, false, 1.0, &mut y);
                (y, Aux::None)
            }
            LayerSpec::Conv2d { kernel, in_channels, out_channels, stride } => {
                let (_, w, _) = image_dims(self.input);
                let (oh, ow, _) = image_dims(self.output);
                let patch = kernel * kernel * in_channels;
                let positions = oh * ow;
                let mut cols = vec![0.0; b * positions * patch];
                let in_len = self.input.len();
                for s in 0..b {
                    let img = &x[s * in_len..(s + 1) * in_len];
                    let dst = &mut cols[s * positions * patch..(s + 1) * positions * patch];
                    im2col(img, w, in_channels, kernel, stride, oh, ow, dst);
                }
                let mut y = vec![0.0; b * positions * out_channels];
                for row in y.chunks_exact_mut(out_channels) {
                    row.copy_from_slice(&self.params.bias);
                }
                gemm(b * positions, patch, out_channels, 1.0, &cols, false, &self.params.weight, false, 1.0, &mut y);
                (y, if record { Aux::Cols(cols) } else { Aux::None })
            }
            LayerSpec::MaxPool2 => {
                let (_, w, c) = image_dims(self.input);
                let (oh, ow, _) = image_dims(self.output);
                let in_len = self.input.len();
                let mut y = vec![0.0; b * out_len];
                let mut arg = if record { vec![0u32; b * out_len] } else { Vec::new() };
                for s in 0..b {
                    let img = &x[s * in_len..(s + 1) * in_len];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                                    if img[idx] > best {
                                        best = img[idx];
                                        best_idx = idx;
                                    }
                                }
                                let o = s * out_len + (oy * ow + ox) * c + ch;
                                y[o] = best;
                                if record {
                                    arg[o] = best_idx as u32;
                                }
                            }
                        }
                    }
                }
                (y, if record { Aux::Argmax(arg) } else { Aux::None })
            }
            LayerSpec::Relu => (x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), Aux::None),
            LayerSpec::Flatten => (x.to_vec(), Aux::None),
        }
    }

    /// Returns (dx, parameter grads). `dx` is empty when not requested.
    fn backward(&self, x: &[f64], aux: &Aux, dy: &[f64], b: usize, need_dx: bool) -> (Vec<f64>, Parameters) {
        match self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                let mut gw = vec![0.0; inputs * outputs];
                gemm(inputs, b, outputs, 1.0, x, true, dy, false, 0.0, &mut gw);
                let gb = column_sums(dy, outputs);
                let dx = if need_dx {
                    let mut dx = vec![0.0; b * inputs];
                    gemm(b, outputs, inputs, 1.0, dy, false, &self.params.weight, true, 0.0, &mut dx);
                    dx
                } else {
                    Vec::new()
                };
                (dx, Parameters { weight: gw, bias: gb })
            }
            LayerSpec::Conv2d { kernel, in_channels, out_channels, stride } => {
                let Aux::Cols(cols) = aux else {
                    unreachable!("conv backward without recorded columns");
                };
                let (_, w, _) = image_dims(self.input);
                let (oh, ow, _) = image_dims(self.output);
                let patch = kernel * kernel * in_channels;
                let positions = oh * ow;
                let rows = b * positions;
                let mut gw = vec![0.0; patch * out_channels];
                gemm(patch, rows, out_channels, 1.0, cols, true, dy, false, 0.0, &mut gw);
                let gb = column_sums(dy, out_channels);
                let dx = if need_dx {
                    let mut dcols = vec![0.0; rows * patch];
                    gemm(rows, out_channels, patch, 1.0, dy, false, &self.params.weight, true, 0.0, &mut dcols);
                    let in_len = self.input.len();
                    let mut dx = vec![0.0; b * in_len];
                    for s in 0..b {
                        col2im(
                            &dcols[s * positions * patch..(s + 1) * positions * patch],
                            w,
                            in_channels,
                            kernel,
                            stride,
                            oh,
                            ow,
                            &mut dx[s * in_len..(s + 1) * in_len],
                        );
                    }
                    dx
                } else {
                    Vec::new()
                };
                (dx, Parameters { weight: gw, bias: gb })
            }
            LayerSpec::MaxPool2 => {
                let Aux::Argmax(arg) = aux else {
                    unreachable!("max-pool backward without recorded argmax");
                };
                let in_len = self.input.len();
                let out_len = self.output.len();
                let mut dx = vec![0.0; b * in_len];
                for s in 0..b {
                    for o in 0..out_len {
                        let k = s * out_len + o;
                        dx[s * in_len + arg[k] as usize] += dy[k];
                    }
                }
                (dx, Parameters::default())
            }
            LayerSpec::Relu => {
                let dx = x.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                (dx, Parameters::default())
            }
            LayerSpec::Flatten => (dy.to_vec(), Parameters::default()),
        }
    }
}

fn column_sums(m: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in m.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Patch matrix for one HWC image: row `oy*ow+ox`, column `(ky*k+kx)*c+ci`.
#[allow(clippy::too_many_arguments)]
fn im2col(img: &[f64], w: usize, c: usize, k: usize, stride: usize, oh: usize, ow: usize, dst: &mut [f64]) {
    let patch = k * k * c;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut dst[(oy * ow + ox) * patch..(oy * ow + ox + 1) * patch];
            for ky in 0..k {
                let src = ((oy * stride + ky) * w + ox * stride) * c;
                row[ky * k * c..(ky + 1) * k * c].copy_from_slice(&img[src..src + k * c]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], w: usize, c: usize, k: usize, stride: usize, oh: usize, ow: usize, dx: &mut [f64]) {
    let patch = k * k * c;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &cols[(oy * ow + ox) * patch..(oy * ow + ox + 1) * patch];
            for ky in 0..k {
                let dst = ((oy * stride + ky) * w + ox * stride) * c;
                for (d, s) in dx[dst..dst + k * c].iter_mut().zip(&row[ky * k * c..(ky + 1) * k * c]) {
                    *d += s;
                }
            }
        }
    }
}

/// Named network families. Every variant is completed with a dense
/// classification head sized to the number of classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// flatten-dense(256)-relu-dense(128)-relu-dense(K)
    Mlp,
    /// conv3×3(16)-relu-pool-conv3×3(32)-relu-pool-flatten-dense(K)
    #[serde(rename = "convnet")]
    ConvNet,
    /// flatten-dense(K): multinomial logistic regression.
    Linear,
    /// flatten, then `hidden` dense+relu blocks, then dense(K).
    Dense { hidden: Vec<usize> },
    /// Arbitrary body; must end in a flat shape.
    Custom { body: Vec<LayerSpec> },
}

impl Architecture {
    pub fn id(&self) -> alloc::string::String {
        match self {
            Architecture::Mlp => "mlp".into(),
            Architecture::ConvNet => "convnet".into(),
            Architecture::Linear => "linear".into(),
            Architecture::Dense { hidden } => format!("dense{hidden:?}"),
            Architecture::Custom { .. } => "custom".into(),
        }
    }

    pub fn layer_specs(&self, input: FeatureShape, classes: usize) -> Result<Vec<LayerSpec>> {
        if classes == 0 {
            bail_arg!("classifier needs at least one class");
        }
        let mut specs = match self {
            Architecture::Mlp => Architecture::Dense { hidden: vec![256, 128] }.body(input),
            Architecture::ConvNet => {
                let (_, _, c) = match input {
                    FeatureShape::Image { .. } => image_dims(input),
                    FeatureShape::Flat(_) => bail_shape!("the convnet needs image-shaped input"),
                };
                vec![
                    LayerSpec::Conv2d { kernel: 3, in_channels: c, out_channels: 16, stride: 1 },
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2,
                    LayerSpec::Conv2d { kernel: 3, in_channels: 16, out_channels: 32, stride: 1 },
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2,
                    LayerSpec::Flatten,
                ]
            }
            Architecture::Linear => vec![LayerSpec::Flatten],
            Architecture::Dense { .. } => self.body(input),
            Architecture::Custom { body } => body.clone(),
        };
        let mut shape = input;
        for s in &specs {
            shape = s.output_shape(shape)?;
        }
        let FeatureShape::Flat(width) = shape else {
            bail_shape!("architecture body must end flat; add a flatten layer");
        };
        specs.push(LayerSpec::Dense { inputs: width, outputs: classes });
        Ok(specs)
    }

    fn body(&self, input: FeatureShape) -> Vec<LayerSpec> {
        let Architecture::Dense { hidden } = self else {
            return Vec::new();
        };
        let mut specs = vec![LayerSpec::Flatten];
        let mut width = input.len();
        for &h in hidden {
            specs.push(LayerSpec::Dense { inputs: width, outputs: h });
            specs.push(LayerSpec::Relu);
            width = h;
        }
        specs
    }

    pub fn build(&self, input: FeatureShape, classes: usize, seed: u64) -> Result<Network> {
        Network::new(input, &self.layer_specs(input, classes)?, seed)
    }
}
