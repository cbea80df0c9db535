//! Recurrent model over decision sequences: LSTM, dropout, rectified dense layer,
//! sigmoid head.

use serde::{Deserialize, Serialize};

use super::{dropout_mask, glorot, zeros, Network, Params, TrainReport, TrainerConfig, INIT_SCHEME};
use crate::behavior::ConsensusTable;
use crate::error::{Error, Result};
use crate::expertise::LabelVector;
use crate::rng::{self, Rng};
use crate::scalar::{sigmoid, Scalar};
use crate::session::MatcherSession;

/// Per-decision inputs `(confidence, normalized time delta, consensus share)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample<T> {
    pub steps: Vec<[T; 3]>,
    pub labels: LabelVector,
}

impl<T: Scalar> SequenceSample<T> {
    pub fn with_labels(mut self, labels: LabelVector) -> Self {
        self.labels = labels;
        self
    }

    pub fn flat(&self) -> &[T] {
        self.steps.as_flattened()
    }
}

/// Time deltas are divided by the session's largest delta (the first delta is 0);
/// consensus counts by the training population size.
pub fn encode_sequence<T: Scalar>(session: &MatcherSession, consensus: &ConsensusTable) -> Result<SequenceSample<T>> {
    let d = session.history.as_slice();
    if d.is_empty() {
        return Err(Error::ModelInput(format!("session {} has no decisions", session.matcher_id)));
    }
    let deltas: Vec<f64> = std::iter::once(0.0).chain(d.windows(2).map(|w| w[1].t - w[0].t)).collect();
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    let steps = d
        .iter()
        .zip(&deltas)
        .map(|(x, &delta)| {
            [
                T::of(x.confidence),
                T::of(if max_delta > 0.0 { delta / max_delta } else { 0.0 }),
                T::of(consensus.share(x.pair())),
            ]
        })
        .collect();
    Ok(SequenceSample {
        steps,
        labels: LabelVector::NONE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqArch {
    pub input: usize,
    pub hidden: usize,
    pub dense: usize,
    pub outputs: usize,
    /// Dropout rate in percent on the final hidden state (training only).
    pub dropout_pct: u32,
}

impl Default for SeqArch {
    fn default() -> Self {
        SeqArch {
            input: 3,
            hidden: 64,
            dense: 100,
            outputs: 4,
            dropout_pct: 50,
        }
    }
}

const WX: usize = 0;
const WH: usize = 1;
const B: usize = 2;
const W1: usize = 3;
const B1: usize = 4;
const W2: usize = 5;
const B2: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqModel<T> {
    pub arch: SeqArch,
    pub seed: u64,
    pub init: String,
    pub params: Params<T>,
    #[serde(default)]
    pub report: TrainReport,
}

struct StepCache<T> {
    /// Gate activations `[i, f, g, o]`, each `hidden` long.
    gates: Vec<T>,
    c: Vec<T>,
    c_prev: Vec<T>,
    h_prev: Vec<T>,
}

struct Forward<T> {
    steps: Vec<StepCache<T>>,
    h_last: Vec<T>,
    mask: Option<Vec<T>>,
    dropped: Vec<T>,
    dense_pre: Vec<T>,
    dense: Vec<T>,
    logits: Vec<T>,
}

/// `out = W x + b` with row-major `W` of shape `rows x x.len()`.
fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            w[r * cols..(r + 1) * cols].iter().zip(x).fold(bias, |acc, (&a, &v)| acc + a * v)
        })
        .collect()
}

impl<T: Scalar> SeqModel<T> {
    pub fn new(arch: SeqArch, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let (i, h, d, o) = (arch.input, arch.hidden, arch.dense, arch.outputs);
        let params = Params {
            tensors: vec![
                glorot(&mut r, "lstm.w_input", vec![4 * h, i], i, 4 * h),
                glorot(&mut r, "lstm.w_hidden", vec![4 * h, h], h, 4 * h),
                zeros("lstm.bias", vec![4 * h]),
                glorot(&mut r, "dense.weight", vec![d, h], h, d),
                zeros("dense.bias", vec![d]),
                zeros("head.weight", vec![o, d]),
                zeros("head.bias", vec![o]),
            ],
        };
        SeqModel {
            arch,
            seed,
            init: INIT_SCHEME.into(),
            params,
            report: TrainReport::default(),
        }
    }

    fn check_input(&self, flat: &[T]) -> Result<()> {
        if flat.is_empty() || flat.len() % self.arch.input != 0 {
            return Err(Error::ModelInput(format!(
                "sequence input of {} values is not a non-empty multiple of {}",
                flat.len(),
                self.arch.input
            )));
        }
        Ok(())
    }

    fn forward(&self, flat: &[T], mask: Option<Vec<T>>) -> Forward<T> {
        let (hn, inp) = (self.arch.hidden, self.arch.input);
        let p = &self.params;
        let mut h = vec![T::zero(); hn];
        let mut c = vec![T::zero(); hn];
        let mut steps = Vec::with_capacity(flat.len() / inp);
        for x in flat.chunks(inp) {
            let zx = affine(p.data(WX), p.data(B), x);
            let zh = affine(p.data(WH), &vec![T::zero(); 4 * hn], &h);
            let mut gates: Vec<T> = zx.iter().zip(&zh).map(|(&a, &b)| a + b).collect();
            for (k, g) in gates.iter_mut().enumerate() {
                *g = if k / hn == 2 { g.tanh() } else { sigmoid(*g) };
            }
            let c_prev = c.clone();
            for u in 0..hn {
                c[u] = gates[hn + u] * c_prev[u] + gates[u] * gates[2 * hn + u];
            }
            let h_prev = std::mem::replace(&mut h, (0..hn).map(|u| gates[3 * hn + u] * c[u].tanh()).collect());
            steps.push(StepCache {
                gates,
                c: c.clone(),
                c_prev,
                h_prev,
            });
        }
        let dropped: Vec<T> = match &mask {
            Some(m) => h.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => h.clone(),
        };
        let dense_pre = affine(p.data(W1), p.data(B1), &dropped);
        let dense: Vec<T> = dense_pre.iter().map(|&v| v.max(T::zero())).collect();
        let logits = affine(p.data(W2), p.data(B2), &dense);
        Forward {
            steps,
            h_last: h,
            mask,
            dropped,
            dense_pre,
            dense,
            logits,
        }
    }

    fn backward(&self, f: &Forward<T>, flat: &[T], dlogits: &[T]) -> Params<T> {
        let (hn, inp, dn, on) = (self.arch.hidden, self.arch.input, self.arch.dense, self.arch.outputs);
        let p = &self.params;
        let mut g = p.zeros_like();

        // head
        for o in 0..on {
            g.tensors[B2].data[o] = dlogits[o];
            for d in 0..dn {
                g.tensors[W2].data[o * dn + d] = dlogits[o] * f.dense[d];
            }
        }
        let mut ddense = vec![T::zero(); dn];
        for o in 0..on {
            for d in 0..dn {
                ddense[d] = ddense[d] + p.data(W2)[o * dn + d] * dlogits[o];
            }
        }
        for d in 0..dn {
            if f.dense_pre[d] <= T::zero() {
                ddense[d] = T::zero();
            }
        }
        let mut dh = vec![T::zero(); hn];
        for d in 0..dn {
            g.tensors[B1].data[d] = ddense[d];
            for u in 0..hn {
                g.tensors[W1].data[d * hn + u] = ddense[d] * f.dropped[u];
                dh[u] = dh[u] + p.data(W1)[d * hn + u] * ddense[d];
            }
        }
        if let Some(m) = &f.mask {
            dh.iter_mut().zip(m).for_each(|(a, &b)| *a = *a * b);
        }
        debug_assert_eq!(f.h_last.len(), hn);

        // through time
        let mut dc = vec![T::zero(); hn];
        let mut dz = vec![T::zero(); 4 * hn];
        for (t, s) in f.steps.iter().enumerate().rev() {
            let x = &flat[t * inp..(t + 1) * inp];
            for u in 0..hn {
                let (i, fg, gg, o) = (s.gates[u], s.gates[hn + u], s.gates[2 * hn + u], s.gates[3 * hn + u]);
                let tc = s.c[u].tanh();
                let d_o = dh[u] * tc;
                let dcu = dc[u] + dh[u] * o * (T::one() - tc * tc);
                dz[u] = dcu * gg * i * (T::one() - i);
                dz[hn + u] = dcu * s.c_prev[u] * fg * (T::one() - fg);
                dz[2 * hn + u] = dcu * i * (T::one() - gg * gg);
                dz[3 * hn + u] = d_o * o * (T::one() - o);
                dc[u] = dcu * fg;
            }
            let mut dh_prev = vec![T::zero(); hn];
            for r in 0..4 * hn {
                let dzr = dz[r];
                if dzr == T::zero() {
                    continue;
                }
                g.tensors[B].data[r] = g.tensors[B].data[r] + dzr;
                for k in 0..inp {
                    let w = &mut g.tensors[WX].data[r * inp + k];
                    *w = *w + dzr * x[k];
                }
                let row_g = &mut g.tensors[WH].data[r * hn..(r + 1) * hn];
                let row_w = &p.data(WH)[r * hn..(r + 1) * hn];
                for u in 0..hn {
                    row_g[u] = row_g[u] + dzr * s.h_prev[u];
                    dh_prev[u] = dh_prev[u] + row_w[u] * dzr;
                }
            }
            dh = dh_prev;
        }
        g
    }

    /// Per-label sigmoid outputs with dropout disabled.
    pub fn predict(&self, sample: &SequenceSample<T>) -> Result<Vec<T>> {
        self.predict_flat(sample.flat())
    }

    pub fn predict_flat(&self, flat: &[T]) -> Result<Vec<T>> {
        self.check_input(flat)?;
        Ok(self.forward(flat, None).logits.into_iter().map(sigmoid).collect())
    }

    pub fn loss(&self, flat: &[T], targets: &[T]) -> T {
        super::bce_with_logits(&self.forward(flat, None).logits, targets).0
    }

    /// Trains a fresh model; `cfg.seed` drives initialization, order and dropout.
    pub fn train(arch: SeqArch, samples: &[SequenceSample<T>], cfg: &TrainerConfig) -> Result<Self> {
        let mut model = SeqModel::new(arch, rng::derive_seed(cfg.seed, "seq-init", 0));
        for s in samples {
            model.check_input(s.flat())?;
        }
        let pairs: Vec<(&[T], Vec<T>)> = samples.iter().map(|s| (s.flat(), super::targets_of(&s.labels))).collect();
        model.report = super::train_network(&mut model, &pairs, cfg);
        Ok(model)
    }
}

impl<T: Scalar> Network<T> for SeqModel<T> {
    type Input = [T];

    fn params(&self) -> &Params<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    fn loss_and_grad(&self, input: &[T], targets: &[T], dropout: Option<&mut Rng>) -> (T, Params<T>) {
        let rate = f64::from(self.arch.dropout_pct) / 100.0;
        let mask = dropout
            .filter(|_| rate > 0.0)
            .map(|r| dropout_mask(r, self.arch.hidden, rate));
        let f = self.forward(input, mask);
        let (loss, dlogits) = super::bce_with_logits(&f.logits, targets);
        (loss, self.backward(&f, input, &dlogits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{max_relative_error, max_relative_error_masked};
    use rand::Rng as _;

    fn small() -> SeqArch {
        SeqArch {
            input: 3,
            hidden: 5,
            dense: 6,
            outputs: 4,
            dropout_pct: 50,
        }
    }

    fn random_model(seed: u64) -> SeqModel<f64> {
        // non-zero head so every tensor receives gradient
        let mut m = SeqModel::new(small(), seed);
        let mut r = rng::rng(seed ^ 99);
        for t in &mut m.params.tensors {
            t.data.iter_mut().for_each(|x| *x = r.random_range(-0.8..0.8));
        }
        m
    }

    fn random_steps(seed: u64, len: usize) -> Vec<f64> {
        let mut r = rng::rng(seed);
        (0..len * 3).map(|_| r.random::<f64>()).collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..3 {
            let mut m = random_model(seed);
            let x = random_steps(seed + 10, 4 + seed as usize);
            for (name, err) in max_relative_error(&mut m, x.as_slice(), &[1.0, 0.0, 1.0, 0.0], 1e-5) {
                assert!(err < 1e-4, "{name}: {err}");
            }
        }
    }

    #[test]
    fn zero_head_predicts_half() {
        let m = SeqModel::<f64>::new(SeqArch::default(), 1);
        let out = m.predict_flat(&random_steps(2, 7)).unwrap();
        assert_eq!(out, vec![0.5; 4]);
        assert!(m.predict_flat(&[0.1, 0.2]).is_err());
        assert!(m.predict_flat(&[]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let sample = SequenceSample {
            steps: vec![[0.5, 0.0, 0.1]],
            labels: LabelVector([true, false, true, false]),
        };
        let cfg = TrainerConfig { epochs: 0, seed: 5, ..TrainerConfig::default() };
        let trained = SeqModel::train(small(), &[sample], &cfg).unwrap();
        let fresh = SeqModel::<f64>::new(small(), rng::derive_seed(5, "seq-init", 0));
        assert_eq!(trained.params, fresh.params);
    }

    #[test]
    fn gradients_match_with_dropout_mask() {
        let mut m = random_model(7);
        let x = random_steps(8, 5);
        let mask_stream = Some(rng::rng(21));
        for (name, err) in max_relative_error_masked(&mut m, x.as_slice(), &[0.0, 1.0, 1.0, 1.0], 1e-5, mask_stream) {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    fn toy_samples() -> Vec<SequenceSample<f64>> {
        (0..16)
            .map(|i| {
                let hi = i % 2 == 0;
                let c = if hi { 0.9 } else { 0.1 };
                SequenceSample {
                    steps: (0..4 + i % 3).map(|k| [c, k as f64 / 6.0, 0.5]).collect(),
                    labels: if hi { LabelVector([true, true, false, true]) } else { LabelVector([false, false, true, false]) },
                }
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainerConfig { epochs: 3, seed: 11, ..TrainerConfig::default() };
        let a = SeqModel::train(small(), &toy_samples(), &cfg).unwrap();
        let b = SeqModel::train(small(), &toy_samples(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let c = SeqModel::train(small(), &toy_samples(), &TrainerConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn separable_toy_problem_is_learned() {
        let arch = SeqArch { hidden: 8, dense: 8, dropout_pct: 0, ..small() };
        let cfg = TrainerConfig { epochs: 200, learning_rate: 0.01, seed: 3, ..TrainerConfig::default() };
        let m = SeqModel::train(arch, &toy_samples(), &cfg).unwrap();
        let last = *m.report.epoch_losses.last().unwrap();
        assert!(last < 0.1, "{last}");
        let avg: Vec<f64> = m.report.epoch_losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        for (i, w) in avg.windows(2).enumerate() {
            assert!(w[1] <= w[0], "moving average rose at epoch {}: {} -> {}", i + 10, w[0], w[1]);
        }
    }

    #[test]
    fn permuting_labels_permutes_outputs() {
        let perm = [2usize, 0, 3, 1];
        let samples = toy_samples();
        let permuted: Vec<_> = samples
            .iter()
            .map(|s| {
                let mut l = LabelVector::NONE;
                for (k, &p) in perm.iter().enumerate() {
                    l.0[k] = s.labels.0[p];
                }
                s.clone().with_labels(l)
            })
            .collect();
        let cfg = TrainerConfig { epochs: 5, seed: 4, ..TrainerConfig::default() };
        let a = SeqModel::train(small(), &samples, &cfg).unwrap();
        let b = SeqModel::train(small(), &permuted, &cfg).unwrap();
        for s in &samples {
            let (pa, pb) = (a.predict(s).unwrap(), b.predict(s).unwrap());
            for (k, &p) in perm.iter().enumerate() {
                assert!((pb[k] - pa[p]).abs() < 1e-9, "{} vs {}", pb[k], pa[p]);
            }
        }
    }
}
