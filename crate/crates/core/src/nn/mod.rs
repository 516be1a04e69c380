//! A small 1D CNN: valid convolutions, max pooling, global average pooling
//! and a dense head, with exact reverse-mode gradients.

pub mod adam;
pub mod loss;
pub mod ops;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use ops::ConvGeometry;

pub use adam::{Adam, AdamConfig};
pub use loss::LossKind;
pub use weights::{load_weights, save_weights, Checkpoint};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} outputs")]
    Label { label: usize, classes: usize },
    #[error("weights file: {0}")]
    Weights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    Relu,
    Softmax,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Softmax => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [Activation::None, Activation::Relu, Activation::Softmax, Activation::Sigmoid].into_iter().find(|a| a.code() == code)
    }

    fn apply(self, z: &mut Vec<f32>) {
        match self {
            Activation::None => {}
            Activation::Relu => ops::relu_in_place(z),
            Activation::Softmax => *z = ops::softmax(z),
            Activation::Sigmoid => *z = ops::sigmoid(z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, stride: usize, activation: Activation },
    MaxPool1d { pool: usize, stride: usize },
    GlobalAvgPool1d,
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    pub fn kind_code(&self) -> u8 {
        match self {
            LayerSpec::Conv1d { .. } => 0,
            LayerSpec::MaxPool1d { .. } => 1,
            LayerSpec::GlobalAvgPool1d => 2,
            LayerSpec::Dense { .. } => 3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::GlobalAvgPool1d => "global_avg_pool1d",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Seq { len, channels } => len * channels,
            Shape::Flat(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Seq { len, channels } => write!(f, "{len}*{channels}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// First-convolution geometry; the rest of the stack is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// conv(K=64, S=3) on 115 inputs.
    Wide,
    /// conv(K=3, S=1) on 20 inputs.
    Narrow,
}

impl Profile {
    pub fn input_len(self) -> usize {
        match self {
            Profile::Wide => 115,
            Profile::Narrow => 20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Wide => "wide",
            Profile::Narrow => "narrow",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "wide" => Ok(Profile::Wide),
            "narrow" => Ok(Profile::Narrow),
            other => Err(format!("unknown profile '{other}' (expected wide or narrow)")),
        }
    }
}

/// Which activation/loss pairing the output head uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pairing {
    /// softmax + binary cross-entropy for two classes, sigmoid + categorical
    /// cross-entropy for more.
    Crossed,
    /// sigmoid + binary cross-entropy, softmax + categorical cross-entropy.
    Standard,
}

impl Pairing {
    pub fn head(self, class_count: usize) -> (Activation, LossKind) {
        match (self, class_count <= 2) {
            (Pairing::Crossed, true) => (Activation::Softmax, LossKind::BinaryCrossEntropy),
            (Pairing::Crossed, false) => (Activation::Sigmoid, LossKind::CategoricalCrossEntropy),
            (Pairing::Standard, true) => (Activation::Sigmoid, LossKind::BinaryCrossEntropy),
            (Pairing::Standard, false) => (Activation::Softmax, LossKind::CategoricalCrossEntropy),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pairing::Crossed => "crossed",
            Pairing::Standard => "standard",
        }
    }
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "crossed" => Ok(Pairing::Crossed),
            "standard" => Ok(Pairing::Standard),
            other => Err(format!("unknown pairing '{other}' (expected crossed or standard)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn profile(profile: Profile, class_count: usize, output: Activation, hidden: Activation) -> Self {
        let (kernel, stride) = match profile {
            Profile::Wide => (64, 3),
            Profile::Narrow => (3, 1),
        };
        Architecture {
            input_len: profile.input_len(),
            input_channels: 1,
            layers: vec![
                LayerSpec::Conv1d { filters: 64, kernel, stride, activation: hidden },
                LayerSpec::MaxPool1d { pool: 5, stride: 5 },
                LayerSpec::Conv1d { filters: 64, kernel: 3, stride: 1, activation: hidden },
                LayerSpec::GlobalAvgPool1d,
                LayerSpec::Dense { units: class_count, activation: output },
            ],
        }
    }

    /// A single dense layer over the flattened input: a softmax or sigmoid
    /// regression, used for feature-vector baselines.
    pub fn dense_only(input_len: usize, class_count: usize, output: Activation) -> Self {
        Architecture { input_len, input_channels: 1, layers: vec![LayerSpec::Dense { units: class_count, activation: output }] }
    }

    /// The input seen by the first layer; a leading dense layer reads it flat.
    pub fn input_shape(&self) -> Shape {
        match self.layers.first() {
            Some(LayerSpec::Dense { .. }) => Shape::Flat(self.input_len * self.input_channels),
            _ => Shape::Seq { len: self.input_len, channels: self.input_channels },
        }
    }

    /// Default model for a class count: wide profile, crossed pairing, ReLU.
    pub fn default_for(class_count: usize) -> Self {
        let (output, _) = Pairing::Crossed.head(class_count);
        Architecture::profile(Profile::Wide, class_count, output, Activation::Relu)
    }

    /// Output shape of every layer, validating the whole stack.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let mut shape = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| NnError::Shape(format!("layer {i} ({}): {msg}", layer.kind_name()));
            shape = match (*layer, shape) {
                (LayerSpec::Conv1d { filters, kernel, stride, activation }, Shape::Seq { len, .. }) => {
                    if filters == 0 {
                        return Err(bad("filters must be >= 1".into()));
                    }
                    if !matches!(activation, Activation::None | Activation::Relu) {
                        return Err(bad("hidden activation must be relu or none".into()));
                    }
                    let out_len = ops::window_out_len(len, kernel, stride)
                        .ok_or_else(|| bad(format!("input length {len} < kernel {kernel} or zero stride")))?;
                    Shape::Seq { len: out_len, channels: filters }
                }
                (LayerSpec::MaxPool1d { pool, stride }, Shape::Seq { len, channels }) => {
                    let out_len = ops::window_out_len(len, pool, stride)
                        .ok_or_else(|| bad(format!("input length {len} < pool {pool} or zero stride")))?;
                    Shape::Seq { len: out_len, channels }
                }
                (LayerSpec::GlobalAvgPool1d, Shape::Seq { len, channels }) if len >= 1 => Shape::Flat(channels),
                (LayerSpec::Dense { units, activation }, Shape::Flat(_)) => {
                    if units == 0 {
                        return Err(bad("units must be >= 1".into()));
                    }
                    if i + 1 != self.layers.len() {
                        return Err(bad("dense must be the last layer".into()));
                    }
                    if !matches!(activation, Activation::Softmax | Activation::Sigmoid) {
                        return Err(bad("output activation must be softmax or sigmoid".into()));
                    }
                    Shape::Flat(units)
                }
                (_, s) => return Err(bad(format!("cannot follow shape {s}"))),
            };
            out.push(shape);
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => Ok(out),
            _ => Err(NnError::Shape("model must end with a dense layer".into())),
        }
    }

    pub fn class_count(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    pub fn output_activation(&self) -> Activation {
        match self.layers.last() {
            Some(LayerSpec::Dense { activation, .. }) => *activation,
            _ => Activation::None,
        }
    }

    /// `(weight_len, bias_len)` per layer; zero for parameter-free layers.
    pub fn param_sizes(&self) -> Result<Vec<(usize, usize)>, NnError> {
        let shapes = self.shapes()?;
        let mut input = self.input_shape();
        let mut sizes = Vec::with_capacity(self.layers.len());
        for (layer, out) in self.layers.iter().zip(&shapes) {
            sizes.push(match (*layer, input) {
                (LayerSpec::Conv1d { filters, kernel, .. }, Shape::Seq { channels, .. }) => (filters * kernel * channels, filters),
                (LayerSpec::Dense { units, .. }, Shape::Flat(n)) => (units * n, units),
                _ => (0, 0),
            });
            input = *out;
        }
        Ok(sizes)
    }

    pub fn param_count(&self) -> Result<usize, NnError> {
        Ok(self.param_sizes()?.iter().map(|(w, b)| w + b).sum())
    }

    fn input_shapes(&self) -> Result<Vec<Shape>, NnError> {
        let mut shapes = vec![self.input_shape()];
        let outs = self.shapes()?;
        shapes.extend_from_slice(&outs[..outs.len() - 1]);
        Ok(shapes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerParams {
    fn zeros(sizes: (usize, usize)) -> Self {
        LayerParams { weights: vec![0.0; sizes.0], bias: vec![0.0; sizes.1] }
    }
}

/// Per-layer values retained by a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer, then the final output.
    activations: Vec<Vec<f32>>,
    argmax: Vec<Vec<usize>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f32] {
        self.activations.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: Vec<LayerParams>,
    shapes_in: Vec<Shape>,
}

impl Model {
    pub fn zeros(arch: Architecture) -> Result<Self, NnError> {
        let params = arch.param_sizes()?.into_iter().map(LayerParams::zeros).collect();
        let shapes_in = arch.input_shapes()?;
        Ok(Model { arch, params, shapes_in })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        let mut model = Model::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, layer) in model.arch.layers.clone().iter().enumerate() {
            let (fan_in, fan_out) = match (*layer, model.shapes_in[i]) {
                (LayerSpec::Conv1d { filters, kernel, .. }, Shape::Seq { channels, .. }) => (kernel * channels, kernel * filters),
                (LayerSpec::Dense { units, .. }, Shape::Flat(n)) => (n, units),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            for w in &mut model.params[i].weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: Vec<LayerParams>) -> Result<Self, NnError> {
        let sizes = arch.param_sizes()?;
        if sizes.len() != params.len() {
            return Err(NnError::Shape(format!("{} parameter sets for {} layers", params.len(), sizes.len())));
        }
        for (i, ((w, b), p)) in sizes.iter().zip(&params).enumerate() {
            if p.weights.len() != *w || p.bias.len() != *b {
                return Err(NnError::Shape(format!("layer {i}: parameter shape mismatch")));
            }
        }
        let shapes_in = arch.input_shapes()?;
        Ok(Model { arch, params, shapes_in })
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len * self.arch.input_channels
    }

    pub fn class_count(&self) -> usize {
        self.arch.class_count()
    }

    fn check_input(&self, x: &[f32]) -> Result<(), NnError> {
        if x.len() != self.input_len() {
            return Err(NnError::Shape(format!("input has {} values, model expects {}", x.len(), self.input_len())));
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &[f32]) -> Result<(Vec<f32>, Vec<usize>), NnError> {
        let p = &self.params[i];
        let out = match (self.arch.layers[i], self.shapes_in[i]) {
            (LayerSpec::Conv1d { filters, kernel, stride, activation }, Shape::Seq { len, channels }) => {
                let g = ConvGeometry { len, in_channels: channels, filters, kernel, stride };
                let mut z = ops::conv1d_forward(x, &p.weights, &p.bias, &g)?;
                activation.apply(&mut z);
                (z, Vec::new())
            }
            (LayerSpec::MaxPool1d { pool, stride }, Shape::Seq { len, channels }) => {
                ops::maxpool1d_forward(x, len, channels, pool, stride)?
            }
            (LayerSpec::GlobalAvgPool1d, Shape::Seq { len, channels }) => {
                (ops::global_avg_pool_forward(x, len, channels)?, Vec::new())
            }
            (LayerSpec::Dense { activation, .. }, Shape::Flat(_)) => {
                let mut z = ops::dense_forward(x, &p.weights, &p.bias);
                activation.apply(&mut z);
                (z, Vec::new())
            }
            (layer, shape) => return Err(NnError::Shape(format!("{} cannot take {shape}", layer.kind_name()))),
        };
        debug_assert!(out.0.iter().all(|v| v.is_finite()), "non-finite activation in layer {i}");
        Ok(out)
    }

    /// Output probabilities for one input.
    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>, NnError> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        for i in 0..self.arch.layers.len() {
            current = self.layer_forward(i, &current)?.0;
        }
        Ok(current)
    }

    pub fn forward_train(&self, x: &[f32]) -> Result<ForwardCache, NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.arch.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.arch.layers.len());
        activations.push(x.to_vec());
        for i in 0..self.arch.layers.len() {
            let (out, arg) = self.layer_forward(i, &activations[i])?;
            activations.push(out);
            argmax.push(arg);
        }
        Ok(ForwardCache { activations, argmax })
    }

    /// Parameter gradients (and the input gradient) from the gradient at the
    /// final layer's logits.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &[f32]) -> (Vec<LayerParams>, Vec<f32>) {
        let mut grads: Vec<LayerParams> = self.params.iter().map(|p| LayerParams::zeros((p.weights.len(), p.bias.len()))).collect();
        let mut grad = grad_logits.to_vec();
        let last = self.arch.layers.len() - 1;
        for i in (0..self.arch.layers.len()).rev() {
            let x = &cache.activations[i];
            let out = &cache.activations[i + 1];
            let p = &self.params[i];
            grad = match (self.arch.layers[i], self.shapes_in[i]) {
                (LayerSpec::Conv1d { filters, kernel, stride, activation }, Shape::Seq { len, channels }) => {
                    if activation == Activation::Relu {
                        ops::relu_backward_in_place(out, &mut grad);
                    }
                    let g = ConvGeometry { len, in_channels: channels, filters, kernel, stride };
                    let (gx, gw, gb) = ops::conv1d_backward(x, &p.weights, &grad, &g);
                    grads[i] = LayerParams { weights: gw, bias: gb };
                    gx
                }
                (LayerSpec::MaxPool1d { .. }, Shape::Seq { len, channels }) => {
                    ops::maxpool1d_backward(&grad, &cache.argmax[i], len, channels)
                }
                (LayerSpec::GlobalAvgPool1d, Shape::Seq { len, .. }) => ops::global_avg_pool_backward(&grad, len),
                (LayerSpec::Dense { .. }, _) => {
                    // the head's activation is folded into grad_logits by the loss
                    debug_assert_eq!(i, last);
                    let (gx, gw, gb) = ops::dense_backward(x, &p.weights, &grad);
                    grads[i] = LayerParams { weights: gw, bias: gb };
                    gx
                }
                _ => unreachable!("shapes validated at construction"),
            };
            debug_assert!(grad.iter().all(|v| v.is_finite()), "non-finite gradient in layer {i}");
        }
        (grads, grad)
    }

    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f32>> {
        self.params.iter_mut().flat_map(|p| [&mut p.weights, &mut p.bias])
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
