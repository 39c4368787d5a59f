//! Dense and positivity-constrained layers and their composition into MLPs.
//!
//! Parameters live in plain `f64` storage. Before a forward pass they are
//! *bound* to a [`Backend`]: on a tape every parameter becomes a leaf, on the
//! dual backend a constant. Positive layers square their raw weights at bind
//! time so the squaring is recorded once per batch rather than per patient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Backend;
use crate::error::{NfgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// Activation applied after the last layer.
///
/// `Tanh` makes the last layer behave like a hidden layer (activation and
/// dropout), which is how the embedding network ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalActivation {
    None,
    Tanh,
    Softplus,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by the output width of every layer.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub final_activation: FinalActivation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, final_activation: FinalActivation) -> Self {
        Self {
            widths,
            activation: Activation::Tanh,
            dropout: 0.0,
            final_activation,
        }
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec has widths")
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(NfgError::Usage("mlp spec needs at least an input width".into()));
        }
        if self.widths.iter().skip(1).any(|&w| w == 0) {
            return Err(NfgError::Usage("mlp layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NfgError::Usage(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `[out × in]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Dense layer whose effective weights are the squares of `raw_weights`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveDenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub raw_weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn bind<B: Backend>(&self, b: &B, leaf: &mut impl FnMut(&B, f64) -> B::S) -> BoundLayer<B::S> {
        BoundLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self.weights.iter().map(|&w| leaf(b, w)).collect(),
            biases: self.biases.iter().map(|&v| leaf(b, v)).collect(),
        }
    }
}

impl PositiveDenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            raw_weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn effective_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw_weights.iter().map(|w| w * w)
    }

    pub fn bind<B: Backend>(&self, b: &B, leaf: &mut impl FnMut(&B, f64) -> B::S) -> BoundLayer<B::S> {
        let weights = self
            .raw_weights
            .iter()
            .map(|&w| {
                let raw = leaf(b, w);
                b.square(raw)
            })
            .collect();
        BoundLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights,
            biases: self.biases.iter().map(|&v| leaf(b, v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    Positive(PositiveDenseLayer),
}

impl Layer {
    fn dims(&self) -> (usize, usize) {
        match self {
            Layer::Dense(l) => (l.in_dim, l.out_dim),
            Layer::Positive(l) => (l.in_dim, l.out_dim),
        }
    }

    fn storage(&self) -> (&[f64], &[f64]) {
        match self {
            Layer::Dense(l) => (&l.weights, &l.biases),
            Layer::Positive(l) => (&l.raw_weights, &l.biases),
        }
    }

    fn storage_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        match self {
            Layer::Dense(l) => (&mut l.weights, &mut l.biases),
            Layer::Positive(l) => (&mut l.raw_weights, &mut l.biases),
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Layer::Positive(_))
    }

    pub fn bind<B: Backend>(&self, b: &B, leaf: &mut impl FnMut(&B, f64) -> B::S) -> BoundLayer<B::S> {
        match self {
            Layer::Dense(l) => l.bind(b, leaf),
            Layer::Positive(l) => l.bind(b, leaf),
        }
    }
}

/// A layer whose parameters live on a backend.
#[derive(Clone, Debug)]
pub struct BoundLayer<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<S>,
    pub biases: Vec<S>,
}

impl<S: Copy> BoundLayer<S> {
    pub fn forward<B: Backend<S = S>>(&self, b: &B, input: &[S]) -> Result<Vec<S>> {
        if input.len() != self.in_dim {
            return Err(NfgError::Shape {
                expected: self.in_dim,
                got: input.len(),
            });
        }
        Ok((0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                b.linear(row, input, self.biases[o])
            })
            .collect())
    }
}

/// Affine map through an unconstrained layer.
pub fn dense_forward<B: Backend>(b: &B, layer: &BoundLayer<B::S>, input: &[B::S]) -> Result<Vec<B::S>> {
    layer.forward(b, input)
}

/// Affine map through a positive layer; the layer must have been bound from a
/// [`PositiveDenseLayer`] so its weights are already squared on the backend.
pub fn positive_dense_forward<B: Backend>(
    b: &B,
    layer: &BoundLayer<B::S>,
    input: &[B::S],
) -> Result<Vec<B::S>> {
    layer.forward(b, input)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug)]
pub struct BoundMlp<S> {
    pub spec: MlpSpec,
    pub layers: Vec<BoundLayer<S>>,
}

impl Mlp {
    /// Builds an MLP from explicit layers, checking that they chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.depth() {
            return Err(NfgError::Usage(format!(
                "spec has {} layers, got {}",
                spec.depth(),
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let (i_dim, o_dim) = layer.dims();
            if i_dim != spec.widths[i] || o_dim != spec.widths[i + 1] {
                return Err(NfgError::Usage(format!(
                    "layer {i} is {i_dim}->{o_dim}, spec says {}->{}",
                    spec.widths[i],
                    spec.widths[i + 1]
                )));
            }
            let (w, bias) = layer.storage();
            if w.len() != i_dim * o_dim || bias.len() != o_dim {
                return Err(NfgError::Usage(format!("layer {i} storage has wrong length")));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn is_positive(&self) -> bool {
        self.layers.iter().all(Layer::is_positive) && !self.layers.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            let (w, b) = layer.storage();
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Overwrites parameters from `src` in [`Mlp::write_params`] order.
    pub fn read_params(&mut self, src: &mut impl Iterator<Item = f64>) -> Result<()> {
        for layer in &mut self.layers {
            let (w, b) = layer.storage_mut();
            for slot in w.iter_mut().chain(b.iter_mut()) {
                *slot = src
                    .next()
                    .ok_or_else(|| NfgError::Usage("parameter vector too short".into()))?;
            }
        }
        Ok(())
    }

    pub fn bind<B: Backend>(&self, b: &B, leaf: &mut impl FnMut(&B, f64) -> B::S) -> BoundMlp<B::S> {
        BoundMlp {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(|l| l.bind(b, leaf)).collect(),
        }
    }

    pub fn bind_constants<B: Backend>(&self, b: &B) -> BoundMlp<B::S> {
        self.bind(b, &mut |b: &B, v| b.constant(v))
    }
}

/// Runs the MLP. Dropout is applied after every tanh activation when `rng`
/// is given (training mode), using inverted scaling so inference needs none.
pub fn mlp_forward<B: Backend, R: Rng + ?Sized>(
    b: &B,
    mlp: &BoundMlp<B::S>,
    input: &[B::S],
    mut rng: Option<&mut R>,
) -> Result<Vec<B::S>> {
    let spec = &mlp.spec;
    if input.len() != spec.input_dim() {
        return Err(NfgError::Shape {
            expected: spec.input_dim(),
            got: input.len(),
        });
    }
    let mut h = input.to_vec();
    let depth = mlp.layers.len();
    for (i, layer) in mlp.layers.iter().enumerate() {
        h = layer.forward(b, &h)?;
        let last = i + 1 == depth;
        if !last || spec.final_activation == FinalActivation::Tanh {
            h = h.into_iter().map(|z| b.tanh(z)).collect();
            if let Some(r) = rng.as_deref_mut() {
                apply_dropout(b, &mut h, spec.dropout, r);
            }
        }
    }
    match spec.final_activation {
        FinalActivation::None | FinalActivation::Tanh => {}
        FinalActivation::Softplus => h = h.into_iter().map(|z| b.softplus(z)).collect(),
        FinalActivation::Softmax => h = softmax(b, &h)?,
    }
    Ok(h)
}

/// Inference-mode forward pass (no dropout).
pub fn mlp_infer<B: Backend>(b: &B, mlp: &BoundMlp<B::S>, input: &[B::S]) -> Result<Vec<B::S>> {
    mlp_forward::<B, rand_chacha::ChaCha8Rng>(b, mlp, input, None)
}

fn apply_dropout<B: Backend, R: Rng + ?Sized>(b: &B, h: &mut [B::S], rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    let keep_scale = 1.0 / (1.0 - rate);
    for unit in h.iter_mut() {
        if rng.random::<f64>() < rate {
            *unit = b.constant(0.0);
        } else {
            *unit = b.scale(*unit, keep_scale);
        }
    }
}

pub fn softmax<B: Backend>(b: &B, logits: &[B::S]) -> Result<Vec<B::S>> {
    let max = logits
        .iter()
        .map(|z| b.value(*z))
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = b.constant(max);
    let exps: Vec<B::S> = logits.iter().map(|z| b.exp(b.sub(*z, shift))).collect();
    let total = b.sum(&exps);
    exps.into_iter().map(|e| b.div(e, total)).collect()
}

/// Random initialization: Glorot-uniform for dense layers, `U(-0.5, 0.5)`
/// raw weights for positive layers. Biases start at zero.
pub fn init_params<R: Rng + ?Sized>(spec: &MlpSpec, positive: bool, rng: &mut R) -> Result<Mlp> {
    spec.validate()?;
    let layers = spec
        .widths
        .windows(2)
        .map(|w| {
            let (i, o) = (w[0], w[1]);
            if positive {
                let mut l = PositiveDenseLayer::zeros(i, o);
                for v in &mut l.raw_weights {
                    *v = rng.random_range(-0.5..0.5);
                }
                Layer::Positive(l)
            } else {
                let limit = (6.0 / (i + o) as f64).sqrt();
                let mut l = DenseLayer::zeros(i, o);
                for v in &mut l.weights {
                    *v = rng.random_range(-limit..limit);
                }
                Layer::Dense(l)
            }
        })
        .collect();
    Mlp::from_layers(spec.clone(), layers)
}
