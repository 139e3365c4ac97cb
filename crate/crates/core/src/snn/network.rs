use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NeuronParams;
use crate::error::{Error, Result};

/// Scale on the `sqrt(6 / fan_in)` bound of the initial weights.
///
/// With the default decays a constant input current `a` settles at a
/// membrane voltage of about `a / ((1 - dc) (1 - dv)) = 128 a`, so unscaled
/// weights already push most voltages far outside the unit-width surrogate
/// window. A quarter of the bound keeps every layer spiking while leaving
/// voltages close enough to threshold for gradients to flow.
pub const INIT_GAIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    AvgPool,
    Conv,
    Dense,
}

impl LayerKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            LayerKind::AvgPool => 0,
            LayerKind::Conv => 1,
            LayerKind::Dense => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerKind::AvgPool),
            1 => Some(LayerKind::Conv),
            2 => Some(LayerKind::Dense),
            _ => None,
        }
    }
}

/// Static description of one layer.
///
/// For [`LayerKind::Dense`], `in_channels` and `out_channels` are feature
/// counts and the kernel fields are zero. Pooling windows are square with
/// stride equal to the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub const fn avg_pool(channels: usize, kernel: usize) -> Self {
        LayerSpec {
            kind: LayerKind::AvgPool,
            in_channels: channels,
            out_channels: channels,
            kernel,
            padding: 0,
            stride: kernel,
        }
    }

    pub const fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize, stride: usize) -> Self {
        LayerSpec { kind: LayerKind::Conv, in_channels, out_channels, kernel, padding, stride }
    }

    pub const fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            in_channels: inputs,
            out_channels: outputs,
            kernel: 0,
            padding: 0,
            stride: 0,
        }
    }

    /// Pooling layers carry fixed weights that are never trained.
    pub fn is_fixed(&self) -> bool {
        self.kind == LayerKind::AvgPool
    }

    /// Output shape for a given input, or an error if they do not chain.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self.kind {
            LayerKind::AvgPool => {
                if self.kernel == 0 || input.channels != self.in_channels || self.in_channels != self.out_channels {
                    return Err(Error::shape(format!("pooling layer {self:?} cannot take {input}")));
                }
                if !input.height.is_multiple_of(self.kernel) || !input.width.is_multiple_of(self.kernel) {
                    return Err(Error::shape(format!(
                        "pool kernel {} does not tile a {}x{} map",
                        self.kernel, input.height, input.width
                    )));
                }
                Ok(Shape::new(input.channels, input.height / self.kernel, input.width / self.kernel))
            }
            LayerKind::Conv => {
                if input.channels != self.in_channels || self.kernel == 0 || self.stride == 0 {
                    return Err(Error::shape(format!("conv layer {self:?} cannot take {input}")));
                }
                let span = |n: usize| {
                    let padded = n + 2 * self.padding;
                    if padded < self.kernel {
                        None
                    } else {
                        Some((padded - self.kernel) / self.stride + 1)
                    }
                };
                match (span(input.height), span(input.width)) {
                    (Some(h), Some(w)) => Ok(Shape::new(self.out_channels, h, w)),
                    _ => Err(Error::shape(format!("conv kernel {} larger than padded {input}", self.kernel))),
                }
            }
            LayerKind::Dense => {
                if input.len() != self.in_channels {
                    return Err(Error::shape(format!(
                        "dense layer expects {} inputs but receives {input} = {}",
                        self.in_channels,
                        input.len()
                    )));
                }
                Ok(Shape::new(self.out_channels, 1, 1))
            }
        }
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::AvgPool => self.kernel * self.kernel,
            LayerKind::Conv => self.out_channels * self.in_channels * self.kernel * self.kernel,
            LayerKind::Dense => self.out_channels * self.in_channels,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::AvgPool => self.kernel * self.kernel,
            LayerKind::Conv => self.in_channels * self.kernel * self.kernel,
            LayerKind::Dense => self.in_channels,
        }
    }
}

/// A built layer: spec, resolved shapes, neuron parameters and weights.
///
/// Weight layouts: pooling `[ky][kx]` shared by all channels, convolution
/// `[out][in][ky][kx]`, dense `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: NeuronParams,
    pub input: Shape,
    pub output: Shape,
    pub weights: Vec<f32>,
}

impl Layer {
    pub fn neurons(&self) -> usize {
        self.output.len()
    }

    pub fn is_trainable(&self) -> bool {
        !self.spec.is_fixed()
    }

    /// Calls `f(post, weight)` for every synapse leaving presynaptic neuron
    /// `pre`. Targets are visited in a fixed order.
    #[inline]
    pub(crate) fn for_each_target(&self, pre: usize, mut f: impl FnMut(usize, f32)) {
        let w = &self.weights;
        self.for_each_synapse(pre, |post, k| f(post, w[k]));
    }

    /// Calls `f(post, weight_index)` for every synapse leaving `pre`.
    #[inline]
    pub(crate) fn for_each_synapse(&self, pre: usize, mut f: impl FnMut(usize, usize)) {
        let inp = self.input;
        let out = self.output;
        match self.spec.kind {
            LayerKind::AvgPool => {
                let k = self.spec.kernel;
                let c = pre / (inp.height * inp.width);
                let y = (pre / inp.width) % inp.height;
                let x = pre % inp.width;
                let post = (c * out.height + y / k) * out.width + x / k;
                f(post, (y % k) * k + x % k);
            }
            LayerKind::Conv => {
                let LayerSpec { kernel: k, padding: pad, stride, in_channels, .. } = self.spec;
                let ci = pre / (inp.height * inp.width);
                let yi = (pre / inp.width) % inp.height;
                let xi = pre % inp.width;
                for co in 0..out.channels {
                    let wbase = (co * in_channels + ci) * k * k;
                    for ky in 0..k {
                        let num = yi + pad;
                        if num < ky || !(num - ky).is_multiple_of(stride) {
                            continue;
                        }
                        let yo = (num - ky) / stride;
                        if yo >= out.height {
                            continue;
                        }
                        for kx in 0..k {
                            let numx = xi + pad;
                            if numx < kx || !(numx - kx).is_multiple_of(stride) {
                                continue;
                            }
                            let xo = (numx - kx) / stride;
                            if xo >= out.width {
                                continue;
                            }
                            f((co * out.height + yo) * out.width + xo, wbase + ky * k + kx);
                        }
                    }
                }
            }
            LayerKind::Dense => {
                let n_in = self.spec.in_channels;
                for post in 0..self.spec.out_channels {
                    f(post, post * n_in + pre);
                }
            }
        }
    }

    /// Adds `W^T d` to `e` for a block of `steps` time steps: routes a
    /// per-neuron signal of this layer back to its presynaptic neurons.
    ///
    /// Both buffers are neuron-major with time contiguous: `d[post * steps + t]`
    /// and `e[pre * steps + t]`.
    pub(crate) fn transpose_into(&self, d: &[f64], e: &mut [f64], steps: usize) {
        let inp = self.input;
        let out = self.output;
        let axpy = |e: &mut [f64], d: &[f64], w: f64| {
            for (ev, &dv) in e.iter_mut().zip(d) {
                *ev += w * dv;
            }
        };
        match self.spec.kind {
            LayerKind::AvgPool => {
                let k = self.spec.kernel;
                for c in 0..inp.channels {
                    for y in 0..inp.height {
                        for x in 0..inp.width {
                            let post = (c * out.height + y / k) * out.width + x / k;
                            let pre = (c * inp.height + y) * inp.width + x;
                            let w = self.weights[(y % k) * k + x % k] as f64;
                            axpy(&mut e[pre * steps..(pre + 1) * steps], &d[post * steps..(post + 1) * steps], w);
                        }
                    }
                }
            }
            LayerKind::Conv => {
                let LayerSpec { kernel: k, padding: pad, stride, in_channels, .. } = self.spec;
                for co in 0..out.channels {
                    for ci in 0..in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let w = self.weights[((co * in_channels + ci) * k + ky) * k + kx] as f64;
                                for yo in 0..out.height {
                                    let yi = (yo * stride + ky) as isize - pad as isize;
                                    if yi < 0 || yi >= inp.height as isize {
                                        continue;
                                    }
                                    let dbase = (co * out.height + yo) * out.width;
                                    let ebase = (ci * inp.height + yi as usize) * inp.width;
                                    if stride == 1 {
                                        // xi = xo + kx - pad must lie in [0, width); the run of
                                        // output columns maps onto a contiguous run of inputs
                                        let lo = pad.saturating_sub(kx);
                                        let hi = (inp.width + pad).saturating_sub(kx).min(out.width);
                                        if lo >= hi {
                                            continue;
                                        }
                                        let off = ebase + lo + kx - pad;
                                        let len = (hi - lo) * steps;
                                        axpy(
                                            &mut e[off * steps..off * steps + len],
                                            &d[(dbase + lo) * steps..(dbase + lo) * steps + len],
                                            w,
                                        );
                                    } else {
                                        for xo in 0..out.width {
                                            let xi = (xo * stride + kx) as isize - pad as isize;
                                            if xi >= 0 && xi < inp.width as isize {
                                                let pre = ebase + xi as usize;
                                                let post = dbase + xo;
                                                axpy(
                                                    &mut e[pre * steps..(pre + 1) * steps],
                                                    &d[post * steps..(post + 1) * steps],
                                                    w,
                                                );
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::Dense => {
                // e (inputs x steps) += W^T (inputs x outputs) . d (outputs x steps)
                let (n_in, n_out) = (self.spec.in_channels, self.spec.out_channels);
                let w: Vec<f64> = self.weights.iter().map(|&v| v as f64).collect();
                assert!(d.len() >= n_out * steps && e.len() >= n_in * steps);
                // SAFETY: the strides describe `w` as an n_in x n_out matrix,
                // `d` as n_out x steps and `e` as n_in x steps, all in bounds
                // as checked above; `e` does not alias the inputs.
                unsafe {
                    matrixmultiply::dgemm(
                        n_in,
                        n_out,
                        steps,
                        1.0,
                        w.as_ptr(),
                        1,
                        n_in as isize,
                        d.as_ptr(),
                        steps as isize,
                        1,
                        1.0,
                        e.as_mut_ptr(),
                        steps as isize,
                        1,
                    );
                }
            }
        }
    }
}

/// Metadata set on a network whose weights have been snapped to the integer
/// grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    /// Grid interval in integer weight units.
    pub sigma: f64,
    /// Integer weight units per unit of synaptic current.
    pub units: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input: Shape,
    pub layers: Vec<Layer>,
    pub steps: usize,
    pub quantization: Option<Quantization>,
}

impl Network {
    /// The default dodging network for a `2 x 128 x 128` input.
    pub fn default_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::avg_pool(2, 4),
            LayerSpec::conv(2, 16, 3, 1, 1),
            LayerSpec::avg_pool(16, 2),
            LayerSpec::conv(16, 32, 3, 1, 1),
            LayerSpec::avg_pool(32, 2),
            LayerSpec::dense(2048, 512),
            LayerSpec::dense(512, 2),
        ]
    }

    pub const DEFAULT_INPUT: Shape = Shape::new(2, 128, 128);

    /// Builds the default architecture with default neuron parameters.
    pub fn dodge(steps: usize, seed: u64) -> Result<Self> {
        Self::build(Self::DEFAULT_INPUT, &Self::default_specs(), steps, NeuronParams::default(), seed)
    }

    /// Builds a network and initialises trainable weights uniformly in
    /// `[-a, a]` with `a = INIT_GAIN * sqrt(6 / fan_in)`. Pooling weights are
    /// `1 / k^2`.
    pub fn build(input: Shape, specs: &[LayerSpec], steps: usize, params: NeuronParams, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("network needs at least one time step"));
        }
        if specs.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let output = spec.output_shape(shape).map_err(|e| Error::shape(format!("layer {i}: {e}")))?;
            let weights = if spec.is_fixed() {
                vec![(1.0 / (spec.kernel * spec.kernel) as f64) as f32; spec.weight_count()]
            } else {
                let bound = INIT_GAIN * (6.0 / spec.fan_in() as f64).sqrt();
                (0..spec.weight_count()).map(|_| rng.random_range(-bound..bound) as f32).collect()
            };
            layers.push(Layer { spec: *spec, params, input: shape, output, weights });
            shape = output;
        }
        Ok(Network { input, layers, steps, quantization: None })
    }

    /// Re-checks shape chaining and weight lengths, e.g. after loading.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.layers.is_empty() {
            return Err(Error::arg("network needs steps and layers"));
        }
        let mut shape = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.params.validate()?;
            if layer.input != shape {
                return Err(Error::shape(format!("layer {i} input {} != {}", layer.input, shape)));
            }
            let out = layer.spec.output_shape(shape)?;
            if out != layer.output {
                return Err(Error::shape(format!("layer {i} output {} != {}", layer.output, out)));
            }
            if layer.weights.len() != layer.spec.weight_count() {
                return Err(Error::shape(format!(
                    "layer {i} has {} weights, expected {}",
                    layer.weights.len(),
                    layer.spec.weight_count()
                )));
            }
            shape = out;
        }
        Ok(())
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.neurons())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::neurons).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_trainable()).map(|l| l.weights.len()).sum()
    }
}
