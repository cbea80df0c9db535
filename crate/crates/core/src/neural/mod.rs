//! From-scratch networks used for late fusion: a recurrent sequence model over
//! decision histories and small convolutional nets over mouse heat maps.
//!
//! Both are trained with Adam on mean binary cross-entropy over the four labels.
//! Output heads start at zero so every label coefficient starts at 0.5.

pub mod seq;
pub mod spatial;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::expertise::LabelVector;
use crate::rng::{self, Rng};
use crate::scalar::{sigmoid, Scalar};

pub use seq::{encode_sequence, SeqArch, SeqModel, SequenceSample};
pub use spatial::{normalize_heatmap, SpatialArch, SpatialModel, SpatialSet};

/// A named parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered list of trainable tensors; gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(&self) -> Self {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = *x * k);
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn data(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }
}

/// Glorot-uniform block in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<T: Scalar>(rng: &mut Rng, name: &str, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    Tensor {
        name: name.into(),
        shape,
        data: (0..len).map(|_| T::of(rng.random_range(-limit..=limit))).collect(),
    }
}

pub(crate) fn zeros<T: Scalar>(name: &str, shape: Vec<usize>) -> Tensor<T> {
    let len = shape.iter().product();
    Tensor {
        name: name.into(),
        shape,
        data: vec![T::zero(); len],
    }
}

pub const INIT_SCHEME: &str = "glorot_uniform(hidden), zeros(bias, output head)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            batch_size: 8,
            seed: 0,
        }
    }
}

pub struct Adam<T> {
    cfg: TrainerConfig,
    m: Params<T>,
    v: Params<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: TrainerConfig, like: &Params<T>) -> Self {
        Adam {
            cfg,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut Params<T>, grads: &Params<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let lr = T::of(self.cfg.learning_rate);
        let eps = T::of(self.cfg.epsilon);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for (k, p) in params.tensors.iter_mut().enumerate() {
            let g = &grads.tensors[k].data;
            let m = &mut self.m.tensors[k].data;
            let v = &mut self.v.tensors[k].data;
            for i in 0..p.data.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] = p.data[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Mean binary cross-entropy over the outputs, computed from logits, and its gradient.
pub fn bce_with_logits<T: Scalar>(logits: &[T], targets: &[T]) -> (T, Vec<T>) {
    let k = T::of_usize(logits.len());
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        loss = loss + z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln();
        grad.push((sigmoid(z) - y) / k);
    }
    (loss / k, grad)
}

pub fn targets_of<T: Scalar>(labels: &LabelVector) -> Vec<T> {
    labels.0.iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
}

/// A network trainable by [`train_network`].
pub trait Network<T: Scalar> {
    type Input: ?Sized;

    fn params(&self) -> &Params<T>;
    fn params_mut(&mut self) -> &mut Params<T>;

    /// Loss and parameter gradients for one sample. `dropout` supplies the mask
    /// stream during training; `None` means inference mode.
    fn loss_and_grad(&self, input: &Self::Input, targets: &[T], dropout: Option<&mut Rng>) -> (T, Params<T>);
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Labels whose training targets contain a single class.
    pub degenerate_labels: Vec<bool>,
}

/// Mini-batch Adam over `samples`; shuffling and dropout come from `cfg.seed`.
pub fn train_network<T, N, I>(net: &mut N, samples: &[(&I, Vec<T>)], cfg: &TrainerConfig) -> TrainReport
where
    T: Scalar,
    N: Network<T, Input = I>,
    I: ?Sized,
{
    let outputs = samples.first().map_or(0, |s| s.1.len());
    let degenerate_labels = (0..outputs)
        .map(|o| {
            let first = samples[0].1[o];
            samples.iter().all(|s| s.1[o] == first)
        })
        .collect();
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        degenerate_labels,
    };
    if samples.is_empty() {
        return report;
    }
    let mut adam = Adam::new(*cfg, net.params());
    let mut order_rng = rng::child_rng(cfg.seed, "order", 0);
    let mut dropout_rng = rng::child_rng(cfg.seed, "dropout", 0);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(1);
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut acc = net.params().zeros_like();
            for &i in chunk {
                let (input, targets) = &samples[i];
                let (loss, grads) = net.loss_and_grad(input, targets, Some(&mut dropout_rng));
                epoch_loss += loss.as_f64();
                acc.add_assign(&grads);
            }
            acc.scale(T::one() / T::of_usize(chunk.len()));
            adam.update(net.params_mut(), &acc);
        }
        report.epoch_losses.push(epoch_loss / samples.len() as f64);
    }
    report
}

/// Inverted-dropout mask: each unit kept with probability `1 - rate`, scaled by `1 / (1 - rate)`.
pub(crate) fn dropout_mask<T: Scalar>(rng: &mut Rng, len: usize, rate: f64) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// Central-difference gradient checks.
pub mod gradcheck {
    use super::*;

    /// Largest relative error between backprop and central differences over every
    /// parameter, with `|a - n| / max(|a|, |n|, 1e-6)`.
    pub fn max_relative_error<N, I>(net: &mut N, input: &I, targets: &[f64], eps: f64) -> Vec<(String, f64)>
    where
        N: Network<f64, Input = I>,
        I: ?Sized,
    {
        max_relative_error_masked(net, input, targets, eps, None)
    }

    /// As [`max_relative_error`], replaying the same dropout stream for every evaluation.
    pub fn max_relative_error_masked<N, I>(
        net: &mut N,
        input: &I,
        targets: &[f64],
        eps: f64,
        dropout: Option<Rng>,
    ) -> Vec<(String, f64)>
    where
        N: Network<f64, Input = I>,
        I: ?Sized,
    {
        let eval = |net: &N| {
            let mut r = dropout.clone();
            net.loss_and_grad(input, targets, r.as_mut())
        };
        let (_, grads) = eval(net);
        let mut out = Vec::new();
        for k in 0..net.params().tensors.len() {
            let mut worst: f64 = 0.0;
            for i in 0..net.params().tensors[k].data.len() {
                let orig = net.params().tensors[k].data[i];
                net.params_mut().tensors[k].data[i] = orig + eps;
                let plus = eval(net).0;
                net.params_mut().tensors[k].data[i] = orig - eps;
                let minus = eval(net).0;
                net.params_mut().tensors[k].data[i] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads.tensors[k].data[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            out.push((net.params().tensors[k].name.clone(), worst));
        }
        out
    }
}
