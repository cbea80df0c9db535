//! Accuracy metrics, baselines, bootstrap tests, the k-fold protocol,
//! expert utilization and early identification.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::characterizer::{assess_or_none, fit_labels, CharacterizerConfig, CharacterizerModel, FeatureFamilies};
use crate::error::{Error, Result};
use crate::expertise::{precision, ExpertiseScores, LabelVector, ThresholdConfig};
use crate::rng;
use crate::session::{match_of, matrix_from_history, truncate_history, MatcherSession, ReferenceMatch};

fn check_lengths(preds: &[LabelVector], truths: &[LabelVector]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} ground-truth vectors",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Evaluation("no matchers to evaluate".into()));
    }
    Ok(())
}

/// Share of matchers whose label `c` is predicted correctly.
pub fn accuracy_single(preds: &[LabelVector], truths: &[LabelVector], c: usize) -> Result<f64> {
    check_lengths(preds, truths)?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p.0[c] == t.0[c]).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn jaccard(p: &LabelVector, t: &LabelVector) -> f64 {
    let inter = (0..4).filter(|&c| p.0[c] && t.0[c]).count();
    let union = (0..4).filter(|&c| p.0[c] || t.0[c]).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean Jaccard similarity of the positive label sets; two empty sets count as 1.
pub fn accuracy_multilabel(preds: &[LabelVector], truths: &[LabelVector]) -> Result<f64> {
    check_lengths(preds, truths)?;
    Ok(preds.iter().zip(truths).map(|(p, t)| jaccard(p, t)).sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precise,
    Thorough,
    Correlated,
    Calibrated,
    Multilabel,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Precise,
        Metric::Thorough,
        Metric::Correlated,
        Metric::Calibrated,
        Metric::Multilabel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precise => "A_P",
            Metric::Thorough => "A_R",
            Metric::Correlated => "A_Res",
            Metric::Calibrated => "A_Cal",
            Metric::Multilabel => "A_ML",
        }
    }

    /// Per-matcher score whose mean is the metric.
    fn score(self, p: &LabelVector, t: &LabelVector) -> f64 {
        match self {
            Metric::Multilabel => jaccard(p, t),
            single => f64::from(u8::from(p.0[single as usize] == t.0[single as usize])),
        }
    }

    pub fn evaluate(self, preds: &[LabelVector], truths: &[LabelVector]) -> Result<f64> {
        match self {
            Metric::Multilabel => accuracy_multilabel(preds, truths),
            single => accuracy_single(preds, truths, single as usize),
        }
    }
}

/// One-sided paired bootstrap p-value for `metric(a) <= metric(b)`: matchers are
/// resampled with replacement and `p = (1 + #{d* <= 0}) / (B + 1)`.
pub fn bootstrap_compare(
    preds_a: &[LabelVector],
    preds_b: &[LabelVector],
    truths: &[LabelVector],
    metric: Metric,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_lengths(preds_a, truths)?;
    check_lengths(preds_b, truths)?;
    let k = truths.len();
    if k < 2 {
        return Err(Error::Evaluation("bootstrap needs at least 2 matchers".into()));
    }
    if samples < 1000 {
        return Err(Error::Config(format!("bootstrap needs >= 1000 resamples, got {samples}")));
    }
    let diff: Vec<f64> = (0..k)
        .map(|i| metric.score(&preds_a[i], &truths[i]) - metric.score(&preds_b[i], &truths[i]))
        .collect();
    let mut r = rng::rng(seed);
    let mut not_better = 0usize;
    for _ in 0..samples {
        let d: f64 = (0..k).map(|_| diff[r.random_range(0..k)]).sum();
        // sums of per-matcher differences are exact multiples of 1/12 at most; guard rounding
        if d <= 1e-9 {
            not_better += 1;
        }
    }
    Ok((1 + not_better) as f64 / (samples + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    Rand,
    RandFreq,
    Conf,
    QualTest,
    SelfAssess,
    Lrsm,
    Beh,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::Rand,
        Baseline::RandFreq,
        Baseline::Conf,
        Baseline::QualTest,
        Baseline::SelfAssess,
        Baseline::Lrsm,
        Baseline::Beh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Rand => "Rand",
            Baseline::RandFreq => "Rand_Freq",
            Baseline::Conf => "Conf",
            Baseline::QualTest => "Qual. Test",
            Baseline::SelfAssess => "Self-Assess",
            Baseline::Lrsm => "LRSM",
            Baseline::Beh => "BEH",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase() == key)
            .or(if key == "randeq" { Some(Baseline::RandFreq) } else { None })
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

impl Serialize for Baseline {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Baseline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Warmup precision and calibration against the reference; `None` precision when
/// the warmup match is empty.
pub fn warmup_measures(session: &MatcherSession, reference: &ReferenceMatch) -> Result<(Option<f64>, f64)> {
    if session.warmup_count == 0 {
        return Err(Error::BaselineInapplicable {
            baseline: "warmup".into(),
            reason: format!("{} has no warmup decisions", session.matcher_id),
        });
    }
    let warm = session.warmup();
    let sigma = match_of(&matrix_from_history::<f64>(&warm, &session.task)?);
    let p = if sigma.is_empty() {
        None
    } else {
        Some(precision(&sigma, reference)?)
    };
    let mean = warm.mean_confidence().expect("non-empty warmup");
    Ok((p, mean - p.unwrap_or(0.0)))
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Training-side inputs of the baselines.
pub struct BaselineContext<'a> {
    pub train: &'a [(&'a MatcherSession, &'a ReferenceMatch)],
    pub train_labels: &'a [LabelVector],
    pub characterizer: &'a CharacterizerConfig,
    pub seed: u64,
}

fn uniform(flag: bool) -> LabelVector {
    if flag {
        LabelVector::ALL
    } else {
        LabelVector::NONE
    }
}

/// Predictions of `baseline` for `test`. Warmup-based baselines read the test
/// sessions' reference match on the warmup block only.
pub fn run_baseline(
    baseline: Baseline,
    ctx: &BaselineContext<'_>,
    test: &[(&MatcherSession, &ReferenceMatch)],
) -> Result<Vec<LabelVector>> {
    let inapplicable = |reason: String| Error::BaselineInapplicable {
        baseline: baseline.name().into(),
        reason,
    };
    match baseline {
        Baseline::Rand => {
            let mut r = rng::child_rng(ctx.seed, "rand", 0);
            Ok(test
                .iter()
                .map(|_| LabelVector([r.random(), r.random(), r.random(), r.random()]))
                .collect())
        }
        Baseline::RandFreq => {
            if ctx.train_labels.is_empty() {
                return Err(inapplicable("no training labels".into()));
            }
            let n = ctx.train_labels.len() as f64;
            let rate: Vec<f64> = (0..4)
                .map(|c| ctx.train_labels.iter().filter(|l| l.0[c]).count() as f64 / n)
                .collect();
            let mut r = rng::child_rng(ctx.seed, "rand_freq", 0);
            Ok(test
                .iter()
                .map(|_| {
                    let mut l = LabelVector::NONE;
                    for c in 0..4 {
                        l.0[c] = r.random::<f64>() < rate[c];
                    }
                    l
                })
                .collect())
        }
        Baseline::Conf => {
            let train: Vec<f64> = ctx.train.iter().filter_map(|(s, _)| s.history.mean_confidence()).collect();
            let cut = median(&train).ok_or_else(|| inapplicable("no training confidences".into()))?;
            Ok(test
                .iter()
                .map(|(s, _)| uniform(s.history.mean_confidence().is_some_and(|m| m > cut)))
                .collect())
        }
        Baseline::QualTest => {
            let mut train = Vec::new();
            for (s, r) in ctx.train {
                train.push(warmup_measures(s, r).map_err(|e| inapplicable(e.to_string()))?.0.unwrap_or(0.0));
            }
            let cut = median(&train).ok_or_else(|| inapplicable("no training sessions".into()))?;
            test.iter()
                .map(|(s, r)| {
                    let (p, _) = warmup_measures(s, r).map_err(|e| inapplicable(e.to_string()))?;
                    Ok(uniform(p.unwrap_or(0.0) > cut))
                })
                .collect()
        }
        Baseline::SelfAssess => test
            .iter()
            .map(|(s, r)| {
                let (p, cal) = warmup_measures(s, r).map_err(|e| inapplicable(e.to_string()))?;
                Ok(uniform(self_assess(p, cal)))
            })
            .collect(),
        Baseline::Lrsm | Baseline::Beh => {
            let families = if baseline == Baseline::Lrsm {
                FeatureFamilies::LrsmOnly
            } else {
                FeatureFamilies::BehMou
            };
            let cfg = CharacterizerConfig {
                families,
                seed: rng::derive_seed(ctx.seed, baseline.name(), 0),
                ..ctx.characterizer.clone()
            };
            let model = CharacterizerModel::train(ctx.train, &cfg)?;
            test.iter().map(|(s, _)| Ok(model.predict(s)?.labels)).collect()
        }
    }
}

/// Expert by self-assessment on the warmup block.
pub fn self_assess(warmup_precision: Option<f64>, warmup_calibration: f64) -> bool {
    warmup_precision.is_some_and(|p| p > 0.6) && warmup_calibration.abs() < 0.2
}

/// Random fold per session: a seeded shuffle dealt round-robin.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::child_rng(seed, "folds", 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub characterizer: CharacterizerConfig,
    pub baselines: Vec<Baseline>,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            characterizer: CharacterizerConfig::default(),
            baselines: Baseline::ALL.to_vec(),
            bootstrap_samples: 10_000,
            seed: 0,
        }
    }
}

pub const MEXI: &str = "MExI";
pub const MEXI_EARLY: &str = "MExI (early)";
pub const NO_FILTER: &str = "no_filter";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: String,
    /// Fold means of `A_P, A_R, A_Res, A_Cal, A_ML`.
    pub mean: [f64; 5],
    pub per_fold: Vec<[f64; 5]>,
}

impl MethodAccuracy {
    pub fn get(&self, metric: Metric) -> f64 {
        self.mean[metric as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: String,
    pub against: String,
    pub metric: Metric,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow {
    pub selection: String,
    pub selected: usize,
    pub empty: bool,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_resolution: Option<f64>,
    pub mean_abs_calibration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub test: Vec<String>,
    pub train_size: usize,
    pub thresholds: ThresholdConfig<f64>,
    pub sub_matchers: usize,
    /// Chosen classifier family per label.
    pub families: Vec<String>,
    pub early_cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub variant: String,
    pub sessions: usize,
    pub folds: Vec<FoldRecord>,
    pub accuracy: Vec<MethodAccuracy>,
    pub comparisons: Vec<Comparison>,
    pub utilization: Vec<UtilizationRow>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodAccuracy> {
        self.accuracy.iter().find(|m| m.method == name)
    }

    pub fn utilization_row(&self, name: &str) -> Option<&UtilizationRow> {
        self.utilization.iter().find(|u| u.selection == name)
    }

    pub fn comparison(&self, against: &str, metric: Metric) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.against == against && c.metric == metric)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    /// Method by metric table.
    pub fn accuracy_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
        w.write_record(&header).expect("in-memory write");
        for m in &self.accuracy {
            let mut row = vec![m.method.clone()];
            row.extend(m.mean.iter().map(|v| format!("{v:.6}")));
            w.write_record(&row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn utilization_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["selection", "selected", "mean_precision", "mean_recall", "mean_resolution", "mean_abs_calibration"])
            .expect("in-memory write");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for u in &self.utilization {
            w.write_record([
                u.selection.clone(),
                u.selected.to_string(),
                cell(u.mean_precision),
                cell(u.mean_recall),
                cell(u.mean_resolution),
                cell(u.mean_abs_calibration),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub fold: usize,
    pub matcher_id: String,
    pub method: String,
    pub truth: LabelVector,
    pub prediction: LabelVector,
}

fn signs(l: &LabelVector) -> String {
    l.0.iter().map(|&b| if b { "+1" } else { "-1" }).collect::<Vec<_>>().join(" ")
}

fn parse_signs(s: &str) -> Result<LabelVector> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::parse("labels", format!("expected 4 signs, found {s:?}")));
    }
    let mut l = LabelVector::NONE;
    for (c, p) in parts.iter().enumerate() {
        l.0[c] = match *p {
            "+1" => true,
            "-1" => false,
            other => return Err(Error::parse("labels", format!("bad sign {other:?}"))),
        };
    }
    Ok(l)
}

pub fn predictions_csv(rows: &[PredictionRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fold", "matcher_id", "method", "truth", "prediction"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.fold.to_string(),
            r.matcher_id.clone(),
            r.method.clone(),
            signs(&r.truth),
            signs(&r.prediction),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn parse_predictions_csv(bytes: &[u8]) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(format!("predictions row {}", i + 1), e.to_string()))?;
        if rec.len() != 5 {
            return Err(Error::parse(format!("predictions row {}", i + 1), "expected 5 fields"));
        }
        out.push(PredictionRow {
            fold: rec[0]
                .parse()
                .map_err(|_| Error::parse(format!("predictions row {}", i + 1), "bad fold"))?,
            matcher_id: rec[1].to_string(),
            method: rec[2].to_string(),
            truth: parse_signs(&rec[3])?,
            prediction: parse_signs(&rec[4])?,
        });
    }
    Ok(out)
}

/// Per-fold accuracies of every method recomputed from prediction rows.
pub fn accuracy_from_predictions(rows: &[PredictionRow], k: usize) -> Result<Vec<MethodAccuracy>> {
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let per_fold = (0..k)
                .map(|f| {
                    let (p, t): (Vec<LabelVector>, Vec<LabelVector>) = rows
                        .iter()
                        .filter(|r| r.fold == f && r.method == method)
                        .map(|r| (r.prediction, r.truth))
                        .unzip();
                    let mut acc = [0.0; 5];
                    for (i, m) in Metric::ALL.iter().enumerate() {
                        acc[i] = m.evaluate(&p, &t)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut mean = [0.0; 5];
            for f in &per_fold {
                for i in 0..5 {
                    mean[i] += f[i] / k as f64;
                }
            }
            Ok(MethodAccuracy { method, mean, per_fold })
        })
        .collect()
}

/// Mean true measures of the selected matchers. Sessions with undefined
/// measures are skipped.
pub fn utilization_row(name: &str, scores: &[Option<ExpertiseScores<f64>>], selected: &[bool]) -> UtilizationRow {
    let chosen: Vec<&ExpertiseScores<f64>> = scores
        .iter()
        .zip(selected)
        .filter(|(_, &s)| s)
        .filter_map(|(s, _)| s.as_ref())
        .collect();
    let mean = |v: Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    UtilizationRow {
        selection: name.into(),
        selected: chosen.len(),
        empty: chosen.is_empty(),
        mean_precision: mean(chosen.iter().map(|s| s.precision).collect()),
        mean_recall: mean(chosen.iter().map(|s| s.recall).collect()),
        mean_resolution: mean(chosen.iter().filter_map(|s| s.resolution).collect()),
        mean_abs_calibration: mean(chosen.iter().map(|s| s.calibration.abs()).collect()),
    }
}

/// `floor(median / 2)` of the decision counts.
pub fn early_cutoff(sessions: &[&MatcherSession]) -> usize {
    let counts: Vec<f64> = sessions.iter().map(|s| s.history.len() as f64).collect();
    median(&counts).map_or(0, |m| (m / 2.0).floor() as usize)
}

/// Predictions on each session truncated to `cutoff` decisions.
pub fn early_identification(
    model: &CharacterizerModel,
    sessions: &[&MatcherSession],
    cutoff: usize,
) -> Result<Vec<LabelVector>> {
    sessions
        .iter()
        .map(|s| Ok(model.predict(&truncate_history(s, cutoff))?.labels))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRow>,
}

/// k-fold cross-validation of the characterizer and the configured baselines.
/// Everything label-dependent is fitted on the training folds.
pub fn kfold_protocol(sessions: &[MatcherSession], refs: &[ReferenceMatch], cfg: &EvalConfig) -> Result<EvalOutput> {
    if refs.len() != sessions.len() {
        return Err(Error::Config(format!("{} sessions but {} reference matches", sessions.len(), refs.len())));
    }
    if cfg.k < 2 || sessions.len() < cfg.k {
        return Err(Error::Protocol(format!("{} sessions cannot be split into {} folds", sessions.len(), cfg.k)));
    }
    let folds = assign_folds(sessions.len(), cfg.k, cfg.seed);
    let mut methods = vec![MEXI.to_string()];
    methods.extend(cfg.baselines.iter().map(|b| b.name().to_string()));
    methods.push(MEXI_EARLY.to_string());

    let mut rows = Vec::new();
    let mut records = Vec::new();
    // pooled over folds, in fold order
    let mut truth_pool = Vec::new();
    let mut score_pool = Vec::new();
    let mut pred_pool: Vec<Vec<LabelVector>> = vec![Vec::new(); methods.len()];

    for f in 0..cfg.k {
        let test_idx: Vec<usize> = (0..sessions.len()).filter(|&i| folds[i] == f).collect();
        let train_idx: Vec<usize> = (0..sessions.len()).filter(|&i| folds[i] != f).collect();
        if let Some(&i) = test_idx.iter().find(|&&i| sessions[i].training_only) {
            return Err(Error::Protocol(format!(
                "sub-matcher {} reached test fold {f}",
                sessions[i].matcher_id
            )));
        }
        if train_idx.len() < 2 {
            return Err(Error::Protocol(format!("fold {f} leaves {} training sessions", train_idx.len())));
        }
        let train: Vec<(&MatcherSession, &ReferenceMatch)> = train_idx.iter().map(|&i| (&sessions[i], &refs[i])).collect();
        let test: Vec<(&MatcherSession, &ReferenceMatch)> = test_idx.iter().map(|&i| (&sessions[i], &refs[i])).collect();
        let perm = &cfg.characterizer.permutation;

        let train_scores = train
            .iter()
            .map(|(s, r)| assess_or_none(s, r, perm))
            .collect::<Result<Vec<_>>>()?;
        let (thresholds, train_labels) = fit_labels(&train_scores, cfg.characterizer.thresholds)
            .map_err(|e| Error::Protocol(format!("fold {f}: {e}")))?;
        let test_scores = test
            .iter()
            .map(|(s, r)| assess_or_none(s, r, perm))
            .collect::<Result<Vec<_>>>()?;
        let truths: Vec<LabelVector> = test_scores
            .iter()
            .map(|s| crate::expertise::labels_or_none(s.as_ref(), &thresholds))
            .collect();

        let fold_seed = rng::derive_seed(cfg.seed, "fold", f as u64);
        let model_cfg = CharacterizerConfig {
            seed: rng::derive_seed(fold_seed, "mexi", 0),
            ..cfg.characterizer.clone()
        };
        let model = CharacterizerModel::train(&train, &model_cfg)?;
        let test_sessions: Vec<&MatcherSession> = test.iter().map(|t| t.0).collect();
        let mut fold_preds = vec![test_sessions
            .iter()
            .map(|s| Ok(model.predict(s)?.labels))
            .collect::<Result<Vec<_>>>()?];
        let ctx = BaselineContext {
            train: &train,
            train_labels: &train_labels,
            characterizer: &cfg.characterizer,
            seed: rng::derive_seed(fold_seed, "baseline", 0),
        };
        for b in &cfg.baselines {
            let ctx = BaselineContext {
                seed: rng::derive_seed(ctx.seed, b.name(), 0),
                ..ctx
            };
            fold_preds.push(run_baseline(*b, &ctx, &test)?);
        }
        let cutoff = early_cutoff(&test_sessions);
        fold_preds.push(early_identification(&model, &test_sessions, cutoff)?);

        for (m, preds) in methods.iter().zip(&fold_preds) {
            for ((s, t), p) in test_sessions.iter().zip(&truths).zip(preds) {
                rows.push(PredictionRow {
                    fold: f,
                    matcher_id: s.matcher_id.clone(),
                    method: m.clone(),
                    truth: *t,
                    prediction: *p,
                });
            }
        }
        for (pool, preds) in pred_pool.iter_mut().zip(fold_preds) {
            pool.extend(preds);
        }
        truth_pool.extend(truths);
        score_pool.extend(test_scores);
        records.push(FoldRecord {
            fold: f,
            test: test_sessions.iter().map(|s| s.matcher_id.clone()).collect(),
            train_size: train.len(),
            thresholds,
            sub_matchers: model.sub_matchers,
            families: model.classifiers.iter().map(|c| c.model.family().to_string()).collect(),
            early_cutoff: cutoff,
        });
    }

    let accuracy = accuracy_from_predictions(&rows, cfg.k)?;

    let mut comparisons = Vec::new();
    for (m, name) in methods.iter().enumerate().skip(1) {
        if name == MEXI_EARLY {
            continue;
        }
        for metric in Metric::ALL {
            let seed = rng::derive_seed(cfg.seed, &format!("bootstrap/{name}"), metric as u64);
            comparisons.push(Comparison {
                method: MEXI.into(),
                against: name.clone(),
                metric,
                p_value: bootstrap_compare(&pred_pool[0], &pred_pool[m], &truth_pool, metric, cfg.bootstrap_samples, seed)?,
            });
        }
    }

    let mut utilization = vec![utilization_row(NO_FILTER, &score_pool, &vec![true; score_pool.len()])];
    for name in ["Conf", "Qual. Test", "Self-Assess", MEXI, MEXI_EARLY] {
        if let Some(m) = methods.iter().position(|x| x == name) {
            let selected: Vec<bool> = pred_pool[m].iter().map(LabelVector::is_all).collect();
            utilization.push(utilization_row(name, &score_pool, &selected));
        }
    }

    let report = EvalReport {
        config: cfg.clone(),
        variant: cfg.characterizer.plan.variant_name.clone(),
        sessions: sessions.len(),
        folds: records,
        accuracy,
        comparisons,
        utilization,
        notes: vec![
            "Conf, Qual. Test and Self-Assess assign one decision to all four labels".into(),
            "utilization measures are computed on full sessions against the reference match".into(),
        ],
    };
    Ok(EvalOutput { report, predictions: rows })
}
