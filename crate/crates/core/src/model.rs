//! Dense feed-forward classifier with tanh hidden layers and a softmax output.
//!
//! Gradients are computed by hand. [`backward`] takes the gradient of the loss
//! with respect to the *probabilities*, so that cross-entropy gradients and the
//! W2 pseudo-gradients (also expressed on probabilities) can simply be summed
//! before a single backward pass.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor inside the cross-entropy logarithm.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// Parameters of the classifier, input layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseLayer>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. `sizes = [p, hidden..., K]`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit));
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("a model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::Input(format!("layer {i}: bias does not match weights")));
            }
            if i > 0 && layers[i - 1].weights.ncols() != l.weights.nrows() {
                return Err(Error::Input(format!("layer {i}: input size does not chain")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// `[p, hidden..., K]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.nrows()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            v.extend(l.weights.iter());
            v.extend(l.bias.iter());
        }
        v
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Input(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_parameters()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|w| *w = it.next().unwrap());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
    }
    if sizes[sizes.len() - 1] < 2 {
        return Err(Error::Config("the output layer needs at least 2 classes".into()));
    }
    Ok(())
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l]` the output of hidden layer `l`.
    pub activations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    /// Softmax probabilities, one row per example.
    pub probs: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.probs.nrows()
    }
}

/// Forward pass over a batch (one example per row).
pub fn forward(params: &ModelParams, x: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
    if x.ncols() != params.num_inputs() {
        return Err(Error::Input(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            params.num_inputs()
        )));
    }
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers);
    activations.push(x.to_owned());
    for layer in &params.layers[..n_layers - 1] {
        let mut z = activations.last().unwrap().dot(&layer.weights);
        z += &layer.bias;
        z.mapv_inplace(f64::tanh);
        activations.push(z);
    }
    let last = &params.layers[n_layers - 1];
    let mut logits = activations.last().unwrap().dot(&last.weights);
    logits += &last.bias;
    let probs = softmax_rows(logits.view());
    Ok(ForwardTrace {
        activations,
        logits,
        probs,
    })
}

/// Forward pass of a single feature vector.
pub fn forward_one(params: &ModelParams, x: &[f64]) -> Result<ForwardTrace> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Input(e.to_string()))?;
    forward(params, view)
}

fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Index of the largest probability; ties go to the smallest index.
pub fn argmax(probs: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

/// Predicted class of every row of the trace.
pub fn predict(trace: &ForwardTrace) -> Vec<usize> {
    trace.probs.rows().into_iter().map(argmax).collect()
}

/// Gradient with respect to every parameter, same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.weights.iter());
            v.extend(l.bias.iter());
        }
        v
    }
}

/// Reverse-mode gradient of `Σ_i ⟨output_grad_i, probs_i⟩` with respect to the parameters.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    output_grad: ArrayView2<'_, f64>,
) -> Result<Gradients> {
    if output_grad.dim() != trace.probs.dim() {
        return Err(Error::Input(format!(
            "output gradient has shape {:?}, probabilities {:?}",
            output_grad.dim(),
            trace.probs.dim()
        )));
    }
    if trace.activations.len() != params.layers.len() {
        return Err(Error::Input("trace was not produced by this model".into()));
    }
    // Softmax Jacobian: dz = p ⊙ (g − ⟨g, p⟩).
    let mut delta = &trace.probs * &output_grad;
    let inner = delta.sum_axis(Axis(1));
    Zip::from(delta.rows_mut())
        .and(trace.probs.rows())
        .and(&inner)
        .for_each(|mut d, p, &s| d.scaled_add(-s, &p));

    let mut grads = Vec::with_capacity(params.layers.len());
    for l in (0..params.layers.len()).rev() {
        let input = &trace.activations[l];
        let dw = input.t().dot(&delta);
        let db = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&params.layers[l].weights.t());
            Zip::from(&mut upstream)
                .and(input)
                .for_each(|u, &a| *u *= 1.0 - a * a);
            delta = upstream;
        }
        grads.push(DenseLayer {
            weights: dw,
            bias: db,
        });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// `−ln max(p_label, ε)`.
pub fn loss_cross_entropy(probs: ArrayView1<'_, f64>, label: usize) -> f64 {
    -probs[label].max(LOG_EPSILON).ln()
}

/// Gradient of the mean cross-entropy with respect to the probabilities.
pub fn cross_entropy_grad(probs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Array2<f64>> {
    if labels.len() != probs.nrows() {
        return Err(Error::Input(format!(
            "{} labels for {} rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let scale = 1.0 / labels.len().max(1) as f64;
    let mut g = Array2::zeros(probs.dim());
    for (i, &y) in labels.iter().enumerate() {
        let p = probs[[i, y]];
        if p > LOG_EPSILON {
            g[[i, y]] = -scale / p;
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.98
}
fn default_adam_eps() -> f64 {
    1e-6
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr } => lr > 0.0 && lr.is_finite(),
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                lr > 0.0
                    && lr.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    steps: u64,
    first: Option<Gradients>,
    second: Option<Gradients>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            steps: 0,
            first: None,
            second: None,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Applies one update in place.
pub fn step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if grads.layers.len() != params.layers.len()
        || grads
            .layers
            .iter()
            .zip(&params.layers)
            .any(|(g, p)| g.weights.dim() != p.weights.dim() || g.bias.dim() != p.bias.dim())
    {
        return Err(Error::Input("gradient shapes do not match parameters".into()));
    }
    state.steps += 1;
    match state.config {
        OptimizerConfig::Sgd { lr } => {
            for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
                p.weights.scaled_add(-lr, &g.weights);
                p.bias.scaled_add(-lr, &g.bias);
            }
        }
        OptimizerConfig::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let m = state.first.get_or_insert_with(|| Gradients::zeros_like(params));
            let v = state.second.get_or_insert_with(|| Gradients::zeros_like(params));
            let t = state.steps as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            for (((p, g), m), v) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut m.layers)
                .zip(&mut v.layers)
            {
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .and(&mut m.weights)
                    .and(&mut v.weights)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
                Zip::from(&mut p.bias)
                    .and(&g.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_FORMAT: &str = "w2reg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    /// `fan_in` rows of `fan_out` values.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

/// On-disk parameter container (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    hidden_activation: String,
    output: String,
    layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            layer_sizes: params.sizes(),
            hidden_activation: "tanh".into(),
            output: "softmax".into(),
            layers: params
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let rows = rec.weights.len();
                let cols = rec.weights.first().map_or(0, Vec::len);
                if rec.weights.iter().any(|r| r.len() != cols) {
                    return Err(Error::Input(format!("layer {i}: ragged weight rows")));
                }
                let flat: Vec<f64> = rec.weights.iter().flatten().copied().collect();
                let weights = Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| Error::Input(e.to_string()))?;
                Ok(DenseLayer {
                    weights,
                    bias: Array1::from(rec.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_layers(layers)?;
        if params.sizes() != self.layer_sizes {
            return Err(Error::Input("layer_sizes disagree with stored layers".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
