//! Small differentiable classifiers: softmax regression and a one-hidden-layer
//! ReLU network. All arithmetic is `f64`.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use train::{evaluate_clean, train, LrSchedule, MetricRow, Split, TrainConfig, TrainOutcome};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{domain, RandomStream};
use crate::types::{Image, LabeledExample, SoftLabel};

/// Floor applied to predicted probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Examples per gradient chunk. Fixed so the reduction order, and therefore
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::Linear => write!(f, "linear"),
            Architecture::Mlp { hidden } => write!(f, "mlp{hidden}"),
        }
    }
}

/// Fully connected layer, weights stored `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    /// `W^T v`
    fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (row, &vi) in self.weights.chunks_exact(self.inputs).zip(v) {
            if vi != 0.0 {
                axpy(vi, row, &mut out);
            }
        }
        out
    }

    /// `W += delta x^T`, `b += delta`
    fn accumulate(&mut self, delta: &[f64], x: &[f64]) {
        for ((row, b), &d) in self
            .weights
            .chunks_exact_mut(self.inputs)
            .zip(&mut self.bias)
            .zip(delta)
        {
            if d != 0.0 {
                axpy(d, x, row);
                *b += d;
            }
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Classifier weights. Layers run input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Dense>,
}

/// Same shape as [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.values_mut().for_each(|v| *v *= s);
        }
    }

    /// Flattened in the same order as [`ModelParams::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }
}

struct Trace {
    /// Hidden pre-activations (MLP only).
    pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(architecture: Architecture, input_dim: usize, output_dim: usize) -> Self {
        let layers = match architecture {
            Architecture::Linear => vec![Dense::zeros(input_dim, output_dim)],
            Architecture::Mlp { hidden } => {
                vec![
                    Dense::zeros(input_dim, hidden),
                    Dense::zeros(hidden, output_dim),
                ]
            }
        };
        Self {
            architecture,
            input_dim,
            output_dim,
            layers,
        }
    }

    /// Linear models start at zero; MLP layers get He-normal weights and
    /// zero biases.
    pub fn init(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Self {
        let mut p = Self::zeros(architecture, input_dim, output_dim);
        if let Architecture::Mlp { .. } = architecture {
            let mut rng = RandomStream::new(seed).derive(domain::INIT);
            for layer in &mut p.layers {
                let normal =
                    Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("positive std");
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = normal.sample(&mut rng));
            }
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.len() {
                return (li, i);
            }
            i -= l.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `i` in flattened order: layer by layer, weights then bias.
    pub fn param(&self, i: usize) -> f64 {
        let (li, k) = self.locate(i);
        let l = &self.layers[li];
        if k < l.weights.len() {
            l.weights[k]
        } else {
            l.bias[k - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (li, k) = self.locate(i);
        let l = &mut self.layers[li];
        if k < l.weights.len() {
            l.weights[k] = v;
        } else {
            l.bias[k - l.weights.len()] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    /// `params -= lr * grads`
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (v, d) in l.values_mut().zip(g.values()) {
                *v -= lr * d;
            }
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len == self.input_dim {
            Ok(())
        } else {
            Err(Error::DimMismatch(format!(
                "model expects {} inputs, got {len}",
                self.input_dim
            )))
        }
    }

    fn check_target(&self, target: &SoftLabel) -> Result<()> {
        if target.len() == self.output_dim {
            Ok(())
        } else {
            Err(Error::LengthMismatch(target.len(), self.output_dim))
        }
    }

    fn run(&self, x: &[f64]) -> Trace {
        match self.architecture {
            Architecture::Linear => Trace {
                pre: Vec::new(),
                hidden: Vec::new(),
                probs: softmax(&self.layers[0].apply(x)),
            },
            Architecture::Mlp { .. } => {
                let pre = self.layers[0].apply(x);
                let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
                let probs = softmax(&self.layers[1].apply(&hidden));
                Trace { pre, hidden, probs }
            }
        }
    }

    /// Class logits for a flattened input.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        Ok(match self.architecture {
            Architecture::Linear => self.layers[0].apply(x),
            Architecture::Mlp { .. } => {
                let h: Vec<f64> = self.layers[0]
                    .apply(x)
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .collect();
                self.layers[1].apply(&h)
            }
        })
    }

    /// Class probabilities for a flattened input.
    pub fn predict(&self, x: &[f64]) -> Result<SoftLabel> {
        self.check_input(x.len())?;
        Ok(SoftLabel::from_probs_unchecked(self.run(x).probs))
    }

    /// Cross-entropy of the prediction on `x` against `target`.
    pub fn loss(&self, x: &[f64], target: &SoftLabel) -> Result<f64> {
        self.check_target(target)?;
        cross_entropy(&self.predict(x)?, target)
    }

    /// dLoss/dlogits and the trace; `p * sum(y) - y`, which is `p - y` for a
    /// normalized target.
    fn backward_logits(&self, x: &[f64], target: &SoftLabel) -> (Trace, Vec<f64>) {
        let trace = self.run(x);
        let mass: f64 = target.sum();
        let dz = trace
            .probs
            .iter()
            .zip(target.probs())
            .map(|(p, y)| p * mass - y)
            .collect();
        (trace, dz)
    }

    fn accumulate_example(&self, x: &[f64], target: &SoftLabel, grads: &mut Gradients) -> f64 {
        let (trace, dz) = self.backward_logits(x, target);
        match self.architecture {
            Architecture::Linear => grads.layers[0].accumulate(&dz, x),
            Architecture::Mlp { .. } => {
                grads.layers[1].accumulate(&dz, &trace.hidden);
                let dpre = self.hidden_delta(&trace, &dz);
                grads.layers[0].accumulate(&dpre, x);
            }
        }
        ce(&trace.probs, target.probs())
    }

    fn hidden_delta(&self, trace: &Trace, dz: &[f64]) -> Vec<f64> {
        let dh = self.layers[1].apply_transpose(dz);
        dh.into_iter()
            .zip(&trace.pre)
            .map(|(d, &p)| if p > 0.0 { d } else { 0.0 })
            .collect()
    }

    /// Gradient of the loss with respect to the input, parameters held fixed.
    pub fn input_gradient(&self, x: &[f64], target: &SoftLabel) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        self.check_target(target)?;
        let (trace, dz) = self.backward_logits(x, target);
        Ok(match self.architecture {
            Architecture::Linear => self.layers[0].apply_transpose(&dz),
            Architecture::Mlp { .. } => {
                let dpre = self.hidden_delta(&trace, &dz);
                self.layers[0].apply_transpose(&dpre)
            }
        })
    }
}

fn ce(probs: &[f64], target: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Softmax class probabilities for `image`.
pub fn forward(params: &ModelParams, image: &Image) -> Result<SoftLabel> {
    params.predict(&image.to_f64())
}

/// `-sum_k target_k * ln(max(pred_k, 1e-12))`
pub fn cross_entropy(pred: &SoftLabel, target: &SoftLabel) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch(pred.len(), target.len()));
    }
    Ok(ce(pred.probs(), target.probs()))
}

/// Mean cross-entropy over `examples` and its gradient with respect to every
/// parameter.
pub fn grad_params(params: &ModelParams, examples: &[LabeledExample]) -> Result<(f64, Gradients)> {
    grad_params_with(Execution::default(), params, examples)
}

pub fn grad_params_with(
    exec: Execution,
    params: &ModelParams,
    examples: &[LabeledExample],
) -> Result<(f64, Gradients)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in examples {
        params.check_input(ex.image.pixels().len())?;
        params.check_target(&ex.label)?;
    }
    let chunks = examples.len().div_ceil(GRAD_CHUNK);
    let partials = exec.map_range(chunks, |c| {
        let mut g = Gradients::zeros_like(params);
        let mut loss = 0.0;
        for ex in examples.iter().skip(c * GRAD_CHUNK).take(GRAD_CHUNK) {
            loss += params.accumulate_example(&ex.image.to_f64(), &ex.label, &mut g);
        }
        (loss, g)
    });
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add(g);
    }
    let n = examples.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Gradient of the loss at `image` with respect to its pixels, HWC order.
pub fn grad_input(params: &ModelParams, image: &Image, target: &SoftLabel) -> Result<Vec<f64>> {
    params.input_gradient(&image.to_f64(), target)
}
