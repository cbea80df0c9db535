//! Per-label binary classifiers over standardized feature vectors.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::scalar::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// L2 penalty of the logistic model.
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Trees in the bagged ensemble; 0 disables the family.
    pub trees: usize,
    pub depth: usize,
    pub min_leaf: usize,
    /// Stratified folds used to pick the family.
    pub folds: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            l2: 0.01,
            learning_rate: 0.5,
            iterations: 300,
            trees: 25,
            depth: 3,
            min_leaf: 2,
            folds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Logistic {
    /// Full-batch gradient descent on the mean log-loss plus `l2/2 * |w|^2`.
    pub fn fit(x: &[Vec<f64>], y: &[bool], cfg: &ClassifierConfig) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut gw = vec![0.0; d];
        for _ in 0..cfg.iterations {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let z = b + w.iter().zip(xi).map(|(a, v)| a * v).sum::<f64>();
                let err = sigmoid(z) - f64::from(u8::from(yi));
                gb += err;
                for (g, v) in gw.iter_mut().zip(xi) {
                    *g += err * v;
                }
            }
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= cfg.learning_rate * (g / n + cfg.l2 * *wj);
            }
            b -= cfg.learning_rate * gb / n;
        }
        Logistic { weights: w, bias: b }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    /// Variance-reduction regression tree on 0/1 targets; leaves hold the positive share.
    fn grow(x: &[Vec<f64>], y: &[f64], idx: &[usize], depth: usize, min_leaf: usize) -> Tree {
        let share = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        if depth == 0 || idx.len() < 2 * min_leaf || share == 0.0 || share == 1.0 {
            return Tree::Leaf(share);
        }
        let d = x[idx[0]].len();
        // (sse, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..d {
            sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let total: f64 = sorted.iter().map(|&i| y[i]).sum();
            let n = sorted.len();
            let mut left = 0.0;
            for k in 1..n {
                left += y[sorted[k - 1]];
                let (lo, hi) = (x[sorted[k - 1]][f], x[sorted[k]][f]);
                if lo == hi || k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let right = total - left;
                // sum of squared errors for 0/1 targets: s - s^2/n per side
                let sse = (left - left * left / nl) + (right - right * right / nr);
                if best.is_none_or(|b| sse < b.0 - 1e-12) {
                    best = Some((sse, f, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return Tree::Leaf(share);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        Tree::Split {
            feature,
            threshold,
            left: Box::new(Tree::grow(x, y, &l, depth - 1, min_leaf)),
            right: Box::new(Tree::grow(x, y, &r, depth - 1, min_leaf)),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Tree::Leaf(v) => *v,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.value(x)
                } else {
                    right.value(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    /// Bootstrap-bagged depth-limited trees.
    pub fn fit(x: &[Vec<f64>], y: &[bool], cfg: &ClassifierConfig, seed: u64) -> Self {
        let targets: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
        let mut r = rng::rng(seed);
        let trees = (0..cfg.trees)
            .map(|_| {
                let idx: Vec<usize> = (0..x.len()).map(|_| r.random_range(0..x.len())).collect();
                Tree::grow(x, &targets, &idx, cfg.depth, cfg.min_leaf.max(1))
            })
            .collect();
        TreeEnsemble { trees }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.value(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BinaryClassifier {
    /// Single-class training labels; always answers the observed class.
    Constant { prior: f64 },
    Logistic(Logistic),
    Trees(TreeEnsemble),
}

impl BinaryClassifier {
    pub fn family(&self) -> &'static str {
        match self {
            BinaryClassifier::Constant { .. } => "constant",
            BinaryClassifier::Logistic(_) => "logistic",
            BinaryClassifier::Trees(_) => "trees",
        }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            BinaryClassifier::Constant { prior } => *prior,
            BinaryClassifier::Logistic(m) => m.probability(x),
            BinaryClassifier::Trees(m) => m.probability(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) >= 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Logistic,
    Trees,
}

fn fit_family(family: Family, x: &[Vec<f64>], y: &[bool], cfg: &ClassifierConfig, seed: u64) -> BinaryClassifier {
    match family {
        Family::Logistic => BinaryClassifier::Logistic(Logistic::fit(x, y, cfg)),
        Family::Trees => BinaryClassifier::Trees(TreeEnsemble::fit(x, y, cfg, seed)),
    }
}

/// Fold index per sample: each class is dealt round-robin in its original order.
pub fn stratified_folds(y: &[bool], k: usize) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    let (mut pos, mut neg) = (0, 0);
    for (i, &label) in y.iter().enumerate() {
        let c = if label { &mut pos } else { &mut neg };
        fold[i] = *c % k;
        *c += 1;
    }
    fold
}

fn validation_accuracy(family: Family, x: &[Vec<f64>], y: &[bool], cfg: &ClassifierConfig, seed: u64) -> f64 {
    let k = cfg.folds.max(2);
    let folds = stratified_folds(y, k);
    let mut correct = 0usize;
    for f in 0..k {
        let (tx, ty): (Vec<Vec<f64>>, Vec<bool>) = x
            .iter()
            .zip(y)
            .zip(&folds)
            .filter(|(_, &g)| g != f)
            .map(|((xi, &yi), _)| (xi.clone(), yi))
            .unzip();
        if tx.is_empty() {
            continue;
        }
        let model = if ty.iter().all(|&v| v == ty[0]) {
            BinaryClassifier::Constant {
                prior: f64::from(u8::from(ty[0])),
            }
        } else {
            fit_family(family, &tx, &ty, cfg, rng::derive_seed(seed, "fold", f as u64))
        };
        correct += x
            .iter()
            .zip(y)
            .zip(&folds)
            .filter(|(_, &g)| g == f)
            .filter(|((xi, &yi), _)| model.predict(xi) == yi)
            .count();
    }
    correct as f64 / y.len() as f64
}

/// Outcome of fitting one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelClassifier {
    pub model: BinaryClassifier,
    /// Stratified validation accuracy of each candidate family.
    pub validation: Vec<(String, f64)>,
}

/// Fits every family, keeps the one with the best validation accuracy (ties go
/// to the logistic model) and refits it on all samples.
pub fn fit_label(x: &[Vec<f64>], y: &[bool], cfg: &ClassifierConfig, seed: u64) -> LabelClassifier {
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == y.len() {
        return LabelClassifier {
            model: BinaryClassifier::Constant {
                prior: f64::from(u8::from(positives > 0)),
            },
            validation: Vec::new(),
        };
    }
    let mut families = vec![Family::Logistic];
    if cfg.trees > 0 {
        families.push(Family::Trees);
    }
    let scored: Vec<(Family, f64)> = families
        .iter()
        .map(|&f| (f, validation_accuracy(f, x, y, cfg, seed)))
        .collect();
    let best = scored
        .iter()
        .fold(scored[0], |acc, &s| if s.1 > acc.1 { s } else { acc })
        .0;
    LabelClassifier {
        model: fit_family(best, x, y, cfg, rng::derive_seed(seed, "final", 0)),
        validation: scored
            .iter()
            .map(|(f, a)| (format!("{f:?}").to_lowercase(), *a))
            .collect(),
    }
}
