use serde::{Deserialize, Serialize};

use super::{NnError, Rng, Tensor};

/// One stage of a feed-forward network.
///
/// Shapes: `Dense` maps `[inputs] -> [outputs]`; `Conv1d` maps
/// `[steps, in_channels] -> [steps, out_channels]` (stride 1, same padding);
/// `Sigmoid` is element-wise over `shape`, shifted to `(-1/2, 1/2)` when
/// `centered`; `Flatten` reinterprets the row-major
/// buffer under a new shape (both flattening and its inverse).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv1d {
        steps: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Sigmoid {
        shape: Vec<usize>,
        #[serde(default)]
        centered: bool,
    },
    Flatten {
        input: Vec<usize>,
        output: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Sigmoid { .. } => "sigmoid",
            LayerSpec::Flatten { .. } => "flatten",
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Dense { inputs, .. } => vec![*inputs],
            LayerSpec::Conv1d {
                steps, in_channels, ..
            } => vec![*steps, *in_channels],
            LayerSpec::Sigmoid { shape, .. } => shape.clone(),
            LayerSpec::Flatten { input, .. } => input.clone(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Dense { outputs, .. } => vec![*outputs],
            LayerSpec::Conv1d {
                steps,
                out_channels,
                ..
            } => vec![*steps, *out_channels],
            LayerSpec::Sigmoid { shape, .. } => shape.clone(),
            LayerSpec::Flatten { output, .. } => output.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * kernel * in_channels + out_channels,
            LayerSpec::Sigmoid { .. } | LayerSpec::Flatten { .. } => 0,
        }
    }

    fn validate(&self, index: usize) -> Result<(), NnError> {
        let bad = |reason: String| NnError::InvalidLayer {
            layer: index,
            kind: self.kind(),
            reason,
        };
        match self {
            LayerSpec::Dense { inputs, outputs } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err(bad("extents must be positive".into()));
                }
            }
            LayerSpec::Conv1d {
                steps,
                in_channels,
                out_channels,
                kernel,
            } => {
                if *steps == 0 || *in_channels == 0 || *out_channels == 0 {
                    return Err(bad("extents must be positive".into()));
                }
                if kernel % 2 == 0 {
                    return Err(bad(format!("kernel width {kernel} must be odd")));
                }
            }
            LayerSpec::Sigmoid { shape, .. } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(bad("shape must be non-empty".into()));
                }
            }
            LayerSpec::Flatten { input, output } => {
                let a: usize = input.iter().product();
                let b: usize = output.iter().product();
                if a != b || a == 0 {
                    return Err(bad(format!(
                        "cannot reshape {input:?} into {output:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    // Glorot-uniform weights, zero biases.
    fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let (fan_in, fan_out, weights, biases) = match self {
            LayerSpec::Dense { inputs, outputs } => {
                (*inputs, *outputs, inputs * outputs, *outputs)
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (
                in_channels * kernel,
                out_channels * kernel,
                out_channels * kernel * in_channels,
                *out_channels,
            ),
            _ => return Vec::new(),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut params: Vec<f64> = (0..weights)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        params.resize(weights + biases, 0.0);
        params
    }
}

/// A layer with its parameters (weights first, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<f64>,
}

impl Layer {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        match &self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = self.params.split_at(inputs * outputs);
                w.chunks_exact(*inputs)
                    .zip(b)
                    .map(|(row, bias)| bias + dot(row, x))
                    .collect()
            }
            LayerSpec::Conv1d {
                steps,
                in_channels,
                out_channels,
                kernel,
            } => conv1d_forward(
                &self.params,
                x,
                *steps,
                *in_channels,
                *out_channels,
                *kernel,
            ),
            LayerSpec::Sigmoid { centered, .. } => {
                let shift = if *centered { 0.5 } else { 0.0 };
                x.iter().map(|v| sigmoid(*v) - shift).collect()
            }
            LayerSpec::Flatten { .. } => x.to_vec(),
        }
    }

    /// Returns `(param_grad, input_grad)` given the layer input, its output
    /// and the gradient of the loss with respect to that output.
    fn backward(&self, x: &[f64], y: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, _) = self.params.split_at(inputs * outputs);
                let mut grad = vec![0.0; self.params.len()];
                let mut gx = vec![0.0; *inputs];
                let (gw, gb) = grad.split_at_mut(inputs * outputs);
                for (o, &go) in g.iter().enumerate() {
                    gb[o] = go;
                    let row = &w[o * inputs..(o + 1) * inputs];
                    let grow = &mut gw[o * inputs..(o + 1) * inputs];
                    for i in 0..*inputs {
                        grow[i] = go * x[i];
                        gx[i] += go * row[i];
                    }
                }
                (grad, gx)
            }
            LayerSpec::Conv1d {
                steps,
                in_channels,
                out_channels,
                kernel,
            } => conv1d_backward(
                &self.params,
                x,
                g,
                *steps,
                *in_channels,
                *out_channels,
                *kernel,
            ),
            LayerSpec::Sigmoid { centered, .. } => {
                let shift = if *centered { 0.5 } else { 0.0 };
                let gx = y
                    .iter()
                    .zip(g)
                    .map(|(y, go)| {
                        let s = y + shift;
                        go * s * (1.0 - s)
                    })
                    .collect();
                (Vec::new(), gx)
            }
            LayerSpec::Flatten { .. } => (Vec::new(), g.to_vec()),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// weights laid out [out][k][in], then biases [out]
fn conv1d_forward(
    params: &[f64],
    x: &[f64],
    steps: usize,
    cin: usize,
    cout: usize,
    kernel: usize,
) -> Vec<f64> {
    let pad = kernel / 2;
    let (w, b) = params.split_at(cout * kernel * cin);
    let mut out = Vec::with_capacity(steps * cout);
    for t in 0..steps {
        out.extend_from_slice(b);
        let acc = &mut out[t * cout..(t + 1) * cout];
        for j in 0..kernel {
            let Some(tt) = (t + j).checked_sub(pad).filter(|tt| *tt < steps) else {
                continue;
            };
            let xrow = &x[tt * cin..(tt + 1) * cin];
            for (o, a) in acc.iter_mut().enumerate() {
                let off = (o * kernel + j) * cin;
                *a += dot(&w[off..off + cin], xrow);
            }
        }
    }
    out
}

fn conv1d_backward(
    params: &[f64],
    x: &[f64],
    g: &[f64],
    steps: usize,
    cin: usize,
    cout: usize,
    kernel: usize,
) -> (Vec<f64>, Vec<f64>) {
    let pad = kernel / 2;
    let nw = cout * kernel * cin;
    let w = &params[..nw];
    let mut grad = vec![0.0; params.len()];
    let mut gx = vec![0.0; steps * cin];
    let (gw, gb) = grad.split_at_mut(nw);
    for t in 0..steps {
        let grow = &g[t * cout..(t + 1) * cout];
        for (o, go) in grow.iter().enumerate() {
            gb[o] += go;
        }
        for j in 0..kernel {
            let Some(tt) = (t + j).checked_sub(pad).filter(|tt| *tt < steps) else {
                continue;
            };
            let xrow = &x[tt * cin..(tt + 1) * cin];
            let gxrow = &mut gx[tt * cin..(tt + 1) * cin];
            for (o, &go) in grow.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let off = (o * kernel + j) * cin;
                let wk = &w[off..off + cin];
                let gwk = &mut gw[off..off + cin];
                for i in 0..cin {
                    gwk[i] += go * xrow[i];
                    gxrow[i] += go * wk[i];
                }
            }
        }
    }
    (grad, gx)
}

/// Per-layer parameter gradients, aligned with [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(net.layers.iter().map(|l| vec![0.0; l.params.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.0.iter_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0
            .iter()
            .position(|layer| layer.iter().any(|v| !v.is_finite()))
    }
}

/// Activations recorded by [`Network::forward_trace`]: the input followed by
/// every layer output.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    pub input_grad: Tensor,
}

/// A sequential network over the four layer kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Builds the network and initializes parameters from `rng`.
    pub fn new(specs: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self, NnError> {
        Self::check_chain(&specs)?;
        let layers = specs
            .into_iter()
            .map(|spec| {
                let params = spec.init_params(rng);
                Layer { spec, params }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_parts(specs: Vec<LayerSpec>, params: Vec<Vec<f64>>) -> Result<Self, NnError> {
        Self::check_chain(&specs)?;
        if specs.len() != params.len() {
            return Err(NnError::ParamCount {
                layer: params.len().min(specs.len()),
                expected: specs.len(),
                got: params.len(),
            });
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (spec, p)) in specs.into_iter().zip(params).enumerate() {
            if p.len() != spec.param_count() {
                return Err(NnError::ParamCount {
                    layer: i,
                    expected: spec.param_count(),
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteParams { layer: i });
            }
            layers.push(Layer { spec, params: p });
        }
        Ok(Self { layers })
    }

    fn check_chain(specs: &[LayerSpec]) -> Result<(), NnError> {
        if specs.is_empty() {
            return Err(NnError::EmptyNetwork);
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate(i)?;
            if i > 0 {
                let prev = specs[i - 1].output_shape();
                if prev != spec.input_shape() {
                    return Err(NnError::ShapeMismatch {
                        layer: i,
                        kind: spec.kind(),
                        expected: spec.input_shape(),
                        got: prev,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.layers[0].spec.input_shape()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers[self.layers.len() - 1].spec.output_shape()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::ParamCount {
                layer: 0,
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.params.len();
            layer.params.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// FNV-1a over the raw parameter bits; equal checksums mean bit-identical
    /// parameters (up to hash collisions).
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for v in self.layers.iter().flat_map(|l| &l.params) {
            for b in v.to_bits().to_le_bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        hash
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        let expected = self.input_shape();
        if x.shape() != expected.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                kind: self.layers[0].spec.kind(),
                expected,
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut cur = x.data().to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur);
        }
        Ok(Tensor::from_parts(self.output_shape(), cur))
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace, NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let out = layer.forward(prev.data());
            activations.push(Tensor::from_parts(layer.spec.output_shape(), out));
        }
        Ok(Trace { activations })
    }

    /// Reverse-mode pass over a recorded trace.
    pub fn backward_trace(&self, trace: &Trace, upstream: &Tensor) -> Result<Backward, NnError> {
        let out_shape = self.output_shape();
        if upstream.shape() != out_shape.as_slice() {
            let last = self.layers.len() - 1;
            return Err(NnError::ShapeMismatch {
                layer: last,
                kind: self.layers[last].spec.kind(),
                expected: out_shape,
                got: upstream.shape().to_vec(),
            });
        }
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut g = upstream.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = trace.activations[i].data();
            let y = trace.activations[i + 1].data();
            let (pg, gx) = layer.backward(x, y, &g);
            grads[i] = pg;
            g = gx;
        }
        Ok(Backward {
            grads: Gradients(grads),
            input_grad: Tensor::from_parts(self.input_shape(), g),
        })
    }

    /// Parameter and input gradients of `<upstream, forward(input)>`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Backward, NnError> {
        let trace = self.forward_trace(input)?;
        self.backward_trace(&trace, upstream)
    }
}
