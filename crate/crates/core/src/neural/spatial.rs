//! Convolutional nets over single-channel heat maps: two conv/ReLU/max-pool
//! blocks and a sigmoid head. One net per mouse event kind.

use serde::{Deserialize, Serialize};

use super::{glorot, zeros, Network, Params, TrainReport, TrainerConfig, INIT_SCHEME};
use crate::error::{Error, Result};
use crate::expertise::LabelVector;
use crate::heatmap::{Bins, HeatMapSet};
use crate::rng::{self, Rng};
use crate::scalar::{sigmoid, Scalar};
use crate::session::EventKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialArch {
    pub height: usize,
    pub width: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub outputs: usize,
}

impl SpatialArch {
    pub fn for_bins(bins: Bins) -> Self {
        SpatialArch {
            height: bins.y,
            width: bins.x,
            conv1: 8,
            conv2: 16,
            kernel: 3,
            outputs: 4,
        }
    }

    fn dims(&self) -> Dims {
        let k = self.kernel;
        let (h1, w1) = (self.height + 1 - k, self.width + 1 - k);
        let (p1h, p1w) = (h1 / 2, w1 / 2);
        let (h2, w2) = (p1h + 1 - k, p1w + 1 - k);
        Dims {
            h1,
            w1,
            p1h,
            p1w,
            h2,
            w2,
            p2h: h2 / 2,
            p2w: w2 / 2,
        }
    }

    pub fn flat_len(&self) -> usize {
        let d = self.dims();
        self.conv2 * d.p2h * d.p2w
    }

    fn validate(&self) -> Result<()> {
        let k = self.kernel;
        let ok = k >= 1 && self.height >= k && self.width >= k && {
            let h1 = self.height + 1 - k;
            let w1 = self.width + 1 - k;
            h1 / 2 >= k && w1 / 2 >= k && (h1 / 2 + 1 - k) / 2 >= 1 && (w1 / 2 + 1 - k) / 2 >= 1
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "heat map {}x{} too small for two {k}x{k} conv/pool blocks",
                self.width, self.height
            )))
        }
    }
}

#[derive(Clone, Copy)]
struct Dims {
    h1: usize,
    w1: usize,
    p1h: usize,
    p1w: usize,
    h2: usize,
    w2: usize,
    p2h: usize,
    p2w: usize,
}

const K1: usize = 0;
const CB1: usize = 1;
const K2: usize = 2;
const CB2: usize = 3;
const WO: usize = 4;
const BO: usize = 5;

/// Valid 2-D convolution (cross-correlation) of `in_c` channels of `h x w`.
fn conv<T: Scalar>(input: &[T], in_c: usize, h: usize, w: usize, kernel: &[T], bias: &[T], k: usize) -> Vec<T> {
    let out_c = bias.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut out = vec![T::zero(); out_c * oh * ow];
    for oc in 0..out_c {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kernel[((oc * in_c + ic) * k + ky) * k + kx];
                    for y in 0..oh {
                        let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d = *d + wgt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv`] w.r.t. kernel, bias and (optionally) input.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    in_c: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    out_c: usize,
    k: usize,
    dout: &[T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    for oc in 0..out_c {
        let plane = &dout[oc * oh * ow..(oc + 1) * oh * ow];
        dbias[oc] = dbias[oc] + plane.iter().copied().sum::<T>();
        for ic in 0..in_c {
            let src = &input[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = T::zero();
                    for y in 0..oh {
                        let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        let g = &plane[y * ow..(y + 1) * ow];
                        acc = acc + row.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
                    }
                    let idx = ((oc * in_c + ic) * k + ky) * k + kx;
                    dkernel[idx] = dkernel[idx] + acc;
                }
            }
        }
    }
    if let Some(dinput) = dinput {
        for oc in 0..out_c {
            let plane = &dout[oc * oh * ow..(oc + 1) * oh * ow];
            for ic in 0..in_c {
                let dst = &mut dinput[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = kernel[((oc * in_c + ic) * k + ky) * k + kx];
                        for y in 0..oh {
                            let row = &mut dst[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                            for (d, &g) in row.iter_mut().zip(&plane[y * ow..(y + 1) * ow]) {
                                *d = *d + wgt * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// ReLU followed by 2x2 max-pool (floor); returns pooled values and argmax indices.
fn relu_pool<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = ch * h * w + (2 * py) * w + 2 * px;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * py + dy) * w + 2 * px + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best].max(T::zero()));
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn relu_pool_backward<T: Scalar>(pre: &[T], arg: &[usize], dout: &[T]) -> Vec<T> {
    let mut d = vec![T::zero(); pre.len()];
    for (&idx, &g) in arg.iter().zip(dout) {
        if pre[idx] > T::zero() {
            d[idx] = d[idx] + g;
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialModel<T> {
    pub arch: SpatialArch,
    pub seed: u64,
    pub init: String,
    pub params: Params<T>,
    #[serde(default)]
    pub report: TrainReport,
}

struct Forward<T> {
    c1: Vec<T>,
    p1: Vec<T>,
    a1: Vec<usize>,
    c2: Vec<T>,
    p2: Vec<T>,
    a2: Vec<usize>,
    logits: Vec<T>,
}

impl<T: Scalar> SpatialModel<T> {
    pub fn new(arch: SpatialArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::rng(seed);
        let k = arch.kernel;
        let params = Params {
            tensors: vec![
                glorot(&mut r, "conv1.kernel", vec![arch.conv1, 1, k, k], k * k, arch.conv1 * k * k),
                zeros("conv1.bias", vec![arch.conv1]),
                glorot(
                    &mut r,
                    "conv2.kernel",
                    vec![arch.conv2, arch.conv1, k, k],
                    arch.conv1 * k * k,
                    arch.conv2 * k * k,
                ),
                zeros("conv2.bias", vec![arch.conv2]),
                zeros("head.weight", vec![arch.outputs, arch.flat_len()]),
                zeros("head.bias", vec![arch.outputs]),
            ],
        };
        Ok(SpatialModel {
            arch,
            seed,
            init: INIT_SCHEME.into(),
            params,
            report: TrainReport::default(),
        })
    }

    fn check_input(&self, grid: &[T]) -> Result<()> {
        if grid.len() != self.arch.height * self.arch.width {
            return Err(Error::ModelInput(format!(
                "heat map of {} cells, model expects {}x{}",
                grid.len(),
                self.arch.width,
                self.arch.height
            )));
        }
        Ok(())
    }

    fn forward(&self, grid: &[T]) -> Forward<T> {
        let a = &self.arch;
        let d = a.dims();
        let p = &self.params;
        let c1 = conv(grid, 1, a.height, a.width, p.data(K1), p.data(CB1), a.kernel);
        let (p1, a1) = relu_pool(&c1, a.conv1, d.h1, d.w1);
        let c2 = conv(&p1, a.conv1, d.p1h, d.p1w, p.data(K2), p.data(CB2), a.kernel);
        let (p2, a2) = relu_pool(&c2, a.conv2, d.h2, d.w2);
        let flat = p2.len();
        let logits = (0..a.outputs)
            .map(|o| {
                p.data(WO)[o * flat..(o + 1) * flat]
                    .iter()
                    .zip(&p2)
                    .fold(p.data(BO)[o], |acc, (&w, &x)| acc + w * x)
            })
            .collect();
        Forward { c1, p1, a1, c2, p2, a2, logits }
    }

    fn backward(&self, f: &Forward<T>, grid: &[T], dlogits: &[T]) -> Params<T> {
        let a = &self.arch;
        let d = a.dims();
        let p = &self.params;
        let mut g = p.zeros_like();
        let flat = f.p2.len();
        let mut dp2 = vec![T::zero(); flat];
        for o in 0..a.outputs {
            g.tensors[BO].data[o] = dlogits[o];
            let wrow = &p.data(WO)[o * flat..(o + 1) * flat];
            let grow = &mut g.tensors[WO].data[o * flat..(o + 1) * flat];
            for i in 0..flat {
                grow[i] = dlogits[o] * f.p2[i];
                dp2[i] = dp2[i] + wrow[i] * dlogits[o];
            }
        }
        let dc2 = relu_pool_backward(&f.c2, &f.a2, &dp2);
        let mut dp1 = vec![T::zero(); f.p1.len()];
        {
            let (head, tail) = g.tensors.split_at_mut(CB2);
            conv_backward(
                &f.p1,
                a.conv1,
                d.p1h,
                d.p1w,
                p.data(K2),
                a.conv2,
                a.kernel,
                &dc2,
                &mut head[K2].data,
                &mut tail[0].data,
                Some(&mut dp1),
            );
        }
        let dc1 = relu_pool_backward(&f.c1, &f.a1, &dp1);
        let (head, tail) = g.tensors.split_at_mut(CB1);
        conv_backward(
            grid,
            1,
            a.height,
            a.width,
            p.data(K1),
            a.conv1,
            a.kernel,
            &dc1,
            &mut head[K1].data,
            &mut tail[0].data,
            None,
        );
        g
    }

    pub fn predict(&self, grid: &[T]) -> Result<Vec<T>> {
        self.check_input(grid)?;
        Ok(self.forward(grid).logits.into_iter().map(sigmoid).collect())
    }

    pub fn loss(&self, grid: &[T], targets: &[T]) -> T {
        super::bce_with_logits(&self.forward(grid).logits, targets).0
    }

    pub fn train(arch: SpatialArch, samples: &[(Vec<T>, LabelVector)], cfg: &TrainerConfig) -> Result<Self> {
        let mut model = SpatialModel::new(arch, rng::derive_seed(cfg.seed, "spatial-init", 0))?;
        for (grid, _) in samples {
            model.check_input(grid)?;
        }
        let pairs: Vec<(&[T], Vec<T>)> = samples
            .iter()
            .map(|(g, l)| (g.as_slice(), super::targets_of(l)))
            .collect();
        model.report = super::train_network(&mut model, &pairs, cfg);
        Ok(model)
    }
}

impl<T: Scalar> Network<T> for SpatialModel<T> {
    type Input = [T];

    fn params(&self) -> &Params<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    fn loss_and_grad(&self, input: &[T], targets: &[T], _dropout: Option<&mut Rng>) -> (T, Params<T>) {
        let f = self.forward(input);
        let (loss, dlogits) = super::bce_with_logits(&f.logits, targets);
        (loss, self.backward(&f, input, &dlogits))
    }
}

/// Heat-map grid scaled by its maximum (all-zero maps stay zero).
pub fn normalize_heatmap<T: Scalar>(grid: &[f64]) -> Vec<T> {
    let max = grid.iter().copied().fold(0.0, f64::max);
    grid.iter()
        .map(|&v| T::of(if max > 0.0 { v / max } else { 0.0 }))
        .collect()
}

/// The four per-kind nets, in [`EventKind::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSet<T> {
    pub bins: Bins,
    pub models: Vec<SpatialModel<T>>,
}

impl<T: Scalar> SpatialSet<T> {
    /// Trains one net per event kind, each from its own derived seed.
    pub fn train(bins: Bins, samples: &[(&HeatMapSet, LabelVector)], cfg: &TrainerConfig) -> Result<Self> {
        let arch = SpatialArch::for_bins(bins);
        let models = EventKind::ALL
            .iter()
            .map(|&kind| {
                let data: Vec<(Vec<T>, LabelVector)> = samples
                    .iter()
                    .map(|(h, l)| (normalize_heatmap(h.grid(kind)), *l))
                    .collect();
                let kind_cfg = TrainerConfig {
                    seed: rng::derive_seed(cfg.seed, "spatial", kind.index() as u64),
                    ..*cfg
                };
                SpatialModel::train(arch, &data, &kind_cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpatialSet { bins, models })
    }

    /// 16 coefficients: four labels for each event kind.
    pub fn predict(&self, heatmaps: &HeatMapSet) -> Result<Vec<T>> {
        if heatmaps.bins != self.bins {
            return Err(Error::ModelInput(format!(
                "heat maps binned {:?}, model trained on {:?}",
                heatmaps.bins, self.bins
            )));
        }
        let mut out = Vec::with_capacity(16);
        for (model, kind) in self.models.iter().zip(EventKind::ALL) {
            out.extend(model.predict(&normalize_heatmap(heatmaps.grid(kind)))?);
        }
        Ok(out)
    }
}
