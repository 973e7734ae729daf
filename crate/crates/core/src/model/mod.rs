//! Dense MLP classifier with softmax cross-entropy, SGD/Adam and a
//! confidence-vector query surface.

mod optim;
mod tensor;

pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::Tensor;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use tensor::{matmul, matmul_nt, matmul_tn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ArchitectureSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("architecture has a zero dimension: {self:?}")));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer: weight `(fan_in, fan_out)`, bias `(fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub(crate) fn zeros_like(other: &Layer) -> Self {
        Self {
            weight: Tensor::zeros(other.weight.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.bias.len()
    }

    /// Weight values then bias values.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.values().iter().chain(self.bias.values())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight
            .values_mut()
            .iter_mut()
            .chain(self.bias.values_mut().iter_mut())
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.shape() == other.bias.shape()
    }
}

/// Parameter-shaped gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Softmax output for a single example.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    pub probs: Vec<f64>,
}

impl ConfidenceVector {
    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Architecture, parameters and optimizer state: everything that evolves
/// across training phases and federated rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    arch: ArchitectureSpec,
    params: Vec<Layer>,
    optimizer: OptimizerState,
}

struct ForwardCache {
    /// Input to each layer (the batch itself, then post-activation outputs).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ModelState {
    /// Seeded init: every weight and bias drawn from `U(-a, a)`, `a = 1/sqrt(fan_in)`.
    pub fn init(arch: ArchitectureSpec, optimizer: OptimizerConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        optimizer.validate()?;
        let mut rng = rng_from_seed(seed);
        let params: Vec<Layer> = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let a = 1.0 / (fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.values_mut() {
                    *v = rng.random_range(-a..a);
                }
                layer
            })
            .collect();
        let optimizer = OptimizerState::fresh(optimizer, &params);
        Ok(Self {
            arch,
            params,
            optimizer,
        })
    }

    /// Builds a model from explicit parameters, checking them against `arch`.
    pub fn from_params(arch: ArchitectureSpec, params: Vec<Layer>, optimizer: OptimizerConfig) -> Result<Self> {
        arch.validate()?;
        optimizer.validate()?;
        let shapes = arch.layer_shapes();
        if shapes.len() != params.len() {
            return Err(Error::dim(format!(
                "expected {} layers, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, ((fan_in, fan_out), layer)) in shapes.iter().zip(&params).enumerate() {
            if layer.weight.shape() != [*fan_in, *fan_out] || layer.bias.shape() != [*fan_out] {
                return Err(Error::dim(format!("layer {i} does not match ({fan_in}, {fan_out})")));
            }
        }
        let optimizer = OptimizerState::fresh(optimizer, &params);
        Ok(Self {
            arch,
            params,
            optimizer,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Replaces the parameters, keeping the optimizer state. Shapes must match.
    pub fn set_layers(&mut self, params: Vec<Layer>) -> Result<()> {
        self.check_congruent(&params)?;
        self.params = params;
        Ok(())
    }

    /// Drops optimizer moments and the step counter.
    pub fn reset_optimizer(&mut self) {
        self.optimizer = OptimizerState::fresh(self.optimizer.config, &self.params);
    }

    /// Switches optimizer kind or hyperparameters; state starts fresh.
    pub fn with_optimizer(mut self, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        self.optimizer = OptimizerState::fresh(config, &self.params);
        Ok(self)
    }

    /// SHA-256 of architecture and parameter bit patterns, hex encoded.
    pub fn param_digest(&self) -> String {
        let mut h = Sha256::new();
        for (fan_in, fan_out) in self.arch.layer_shapes() {
            h.update((fan_in as u64).to_le_bytes());
            h.update((fan_out as u64).to_le_bytes());
        }
        for v in self.params.iter().flat_map(Layer::values) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_congruent(&self, other: &[Layer]) -> Result<()> {
        if other.len() != self.params.len() || self.params.iter().zip(other).any(|(a, b)| !a.same_shape(b)) {
            return Err(Error::dim("parameter list is not shape-congruent with the model"));
        }
        Ok(())
    }

    fn forward_cached(&self, batch: &Tensor) -> Result<ForwardCache> {
        if batch.shape().len() != 2 || batch.cols() != self.arch.input_dim {
            return Err(Error::dim(format!(
                "batch shape {:?} does not match input_dim {}",
                batch.shape(),
                self.arch.input_dim
            )));
        }
        let n = batch.rows();
        let last = self.params.len() - 1;
        let mut inputs = vec![batch.values().to_vec()];
        let mut pre = Vec::with_capacity(last);
        for (i, layer) in self.params.iter().enumerate() {
            let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
            let mut z = matmul(
                inputs.last().expect("nonempty"),
                layer.weight.values(),
                n,
                fan_in,
                fan_out,
            );
            for row in z.chunks_exact_mut(fan_out) {
                for (v, b) in row.iter_mut().zip(layer.bias.values()) {
                    *v += b;
                }
            }
            if i == last {
                return Ok(ForwardCache { inputs, pre, logits: z });
            }
            let a = z.iter().map(|&v| self.arch.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(a);
        }
        unreachable!("architecture always has an output layer")
    }

    /// Logits `(B, num_classes)` for a `(B, input_dim)` batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let cache = self.forward_cached(batch)?;
        Tensor::new(vec![batch.rows(), self.arch.num_classes], cache.logits)
    }

    /// Softmax of the logits for one feature vector.
    pub fn predict_confidences(&self, features: &[f64]) -> Result<ConfidenceVector> {
        let batch = Tensor::new(vec![1, features.len()], features.to_vec())?;
        let logits = self.forward(&batch)?;
        Ok(ConfidenceVector {
            probs: softmax(logits.values()),
        })
    }

    /// Mean softmax cross-entropy over the batch and its gradients.
    pub fn loss_and_gradients(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        let n = batch.shape().first().copied().unwrap_or(0);
        if labels.is_empty() || labels.len() != n {
            return Err(Error::data(format!("{} labels for a batch of {n}", labels.len())));
        }
        let c = self.arch.num_classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::data(format!("label {bad} outside [0, {c})")));
        }
        let cache = self.forward_cached(batch)?;
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut delta = vec![0.0; n * c];
        for (i, (&label, logits)) in labels.iter().zip(cache.logits.chunks_exact(c)).enumerate() {
            loss += log_sum_exp(logits) - logits[label];
            let probs = softmax(logits);
            let d = &mut delta[i * c..(i + 1) * c];
            for (dv, p) in d.iter_mut().zip(probs) {
                *dv = p * inv_n;
            }
            d[label] -= inv_n;
        }
        loss *= inv_n;

        let mut grads: Vec<Layer> = Vec::with_capacity(self.params.len());
        for (i, layer) in self.params.iter().enumerate().rev() {
            let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
            let weight = matmul_tn(&cache.inputs[i], &delta, n, fan_in, fan_out);
            let mut bias = vec![0.0; fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if i > 0 {
                let mut back = matmul_nt(&delta, layer.weight.values(), n, fan_out, fan_in);
                for ((g, &z), &a) in back.iter_mut().zip(&cache.pre[i - 1]).zip(&cache.inputs[i]) {
                    *g *= self.arch.activation.derivative(z, a);
                }
                delta = back;
            }
            grads.push(Layer {
                weight: Tensor::new(vec![fan_in, fan_out], weight)?,
                bias: Tensor::new(vec![fan_out], bias)?,
            });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    pub fn optimizer_step(&mut self, grads: &Gradients) -> Result<()> {
        self.check_congruent(&grads.layers)?;
        self.optimizer.apply(&mut self.params, &grads.layers);
        Ok(())
    }

    /// Full passes over `examples` in minibatches; the order is reshuffled
    /// every epoch from a stream seeded by `shuffle_seed`. Optimizer state
    /// carries across epochs.
    pub fn train_epochs(
        &mut self,
        examples: &[&LabeledExample],
        epochs: usize,
        batch_size: usize,
        shuffle_seed: u64,
    ) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::data("cannot train on an empty example set"));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let mut rng = rng_from_seed(shuffle_seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch_size) {
                let rows: Vec<&[f64]> = chunk.iter().map(|&i| examples[i].features.as_slice()).collect();
                let labels: Vec<usize> = chunk.iter().map(|&i| examples[i].label).collect();
                let (_, grads) = self.loss_and_gradients(&Tensor::from_rows(&rows)?, &labels)?;
                self.optimizer_step(&grads)?;
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over `examples`.
    pub fn mean_loss(&self, examples: &[&LabeledExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::data("cannot evaluate on an empty example set"));
        }
        let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        Ok(self.loss_and_gradients(&Tensor::from_rows(&rows)?, &labels)?.0)
    }

    /// Fraction of examples whose argmax prediction equals the label.
    pub fn accuracy(&self, examples: &[&LabeledExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::data("cannot evaluate on an empty example set"));
        }
        let rows: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
        let logits = self.forward(&Tensor::from_rows(&rows)?)?;
        let correct = logits
            .values()
            .chunks_exact(self.arch.num_classes)
            .zip(examples)
            .filter(|(row, ex)| argmax(row) == ex.label)
            .count();
        Ok(correct as f64 / examples.len() as f64)
    }
}
