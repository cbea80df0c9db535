//! The expert characterizer: fused behavioral features and one binary
//! classifier per characteristic.

use serde::{Deserialize, Serialize};

use crate::augmentation::{label_sub_matcher, sub_matchers, AugmentPlan, LabelSource};
use crate::behavior::{
    behavioral_features, build_consensus, mouse_features, ConsensusTable, BEHAVIOR_NAMES, DEFAULT_IDLE_THRESHOLD,
    MOUSE_NAMES,
};
use crate::classifier::{fit_label, ClassifierConfig, LabelClassifier};
use crate::error::{Error, Result};
use crate::expertise::{
    assess, fit_thresholds, labels_or_none, ExpertiseScores, LabelVector, PermutationConfig, ThresholdConfig,
};
use crate::heatmap::{heatmaps_from_map, Bins, HeatMapSet, DEFAULT_BINS};
use crate::neural::seq::{encode_sequence, SeqArch, SeqModel};
use crate::neural::spatial::SpatialSet;
use crate::neural::TrainerConfig;
use crate::predictors::{lrsm_features, PREDICTOR_NAMES};
use crate::rng;
use crate::session::{final_match, matrix_from_history, MatcherSession, ReferenceMatch};

pub const MODEL_FORMAT: &str = "mexi-model/1";

/// Which feature blocks a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamilies {
    /// Predictors, behavior, mouse and both fused nets.
    Full,
    LrsmOnly,
    /// Behavior and mouse blocks.
    BehMou,
}

impl FeatureFamilies {
    fn lrsm(self) -> bool {
        matches!(self, FeatureFamilies::Full | FeatureFamilies::LrsmOnly)
    }

    fn beh_mou(self) -> bool {
        matches!(self, FeatureFamilies::Full | FeatureFamilies::BehMou)
    }

    fn fused(self) -> bool {
        self == FeatureFamilies::Full
    }

    pub fn schema(self) -> Vec<String> {
        let mut names = Vec::new();
        if self.lrsm() {
            names.extend(PREDICTOR_NAMES.iter().map(|n| format!("lrsm.{n}")));
        }
        if self.beh_mou() {
            names.extend(BEHAVIOR_NAMES.iter().map(|n| format!("beh.{n}")));
            names.extend(MOUSE_NAMES.iter().map(|n| format!("mou.{n}")));
        }
        if self.fused() {
            names.extend((0..4).map(|i| format!("seq.coef{i}")));
            for kind in crate::session::EventKind::ALL {
                names.extend((0..4).map(|i| format!("spa.{}.coef{i}", kind.code())));
            }
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizerConfig {
    pub plan: AugmentPlan,
    pub label_source: LabelSource,
    pub families: FeatureFamilies,
    pub thresholds: ThresholdConfig<f64>,
    pub permutation: PermutationConfig,
    pub seq_arch: SeqArch,
    pub seq_trainer: TrainerConfig,
    pub spatial_trainer: TrainerConfig,
    pub bins: Bins,
    pub idle_threshold: f64,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

impl Default for CharacterizerConfig {
    fn default() -> Self {
        CharacterizerConfig {
            plan: AugmentPlan::base(),
            label_source: LabelSource::Recompute,
            families: FeatureFamilies::Full,
            thresholds: ThresholdConfig::default(),
            permutation: PermutationConfig::default(),
            seq_arch: SeqArch::default(),
            seq_trainer: TrainerConfig::default(),
            spatial_trainer: TrainerConfig {
                epochs: 8,
                ..TrainerConfig::default()
            },
            bins: DEFAULT_BINS,
            idle_threshold: DEFAULT_IDLE_THRESHOLD,
            classifier: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNets {
    pub seq: SeqModel<f64>,
    pub spatial: SpatialSet<f64>,
}

/// Per-feature standardization fitted on the training sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            scale[j] = var.sqrt();
        }
        Standardizer { mean, scale }
    }

    /// Zero-variance features map to 0.
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| if s > 1e-12 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// Ordered named features of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizerModel {
    pub format: String,
    pub config: CharacterizerConfig,
    pub schema: Vec<String>,
    pub standardizer: Standardizer,
    /// In [`crate::Characteristic::ALL`] order.
    pub classifiers: Vec<LabelClassifier>,
    pub thresholds: ThresholdConfig<f64>,
    pub consensus: ConsensusTable,
    pub fusion: Option<FusionNets>,
    pub train_sessions: usize,
    pub sub_matchers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: LabelVector,
    pub probabilities: [f64; 4],
}

/// Measures of a session; `None` when undefined (empty final match).
pub fn assess_or_none(
    session: &MatcherSession,
    reference: &ReferenceMatch,
    perm: &PermutationConfig,
) -> Result<Option<ExpertiseScores<f64>>> {
    match assess::<f64>(session, reference, perm) {
        Ok(s) => Ok(Some(s)),
        Err(Error::UndefinedMeasure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Thresholds fitted on `scores`, then labels for each (undefined → all `-1`).
pub fn fit_labels(
    scores: &[Option<ExpertiseScores<f64>>],
    defaults: ThresholdConfig<f64>,
) -> Result<(ThresholdConfig<f64>, Vec<LabelVector>)> {
    let defined: Vec<_> = scores.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Protocol("no training session has a defined final match".into()));
    }
    let th = fit_thresholds(&defined, defaults)?;
    let labels = scores.iter().map(|s| labels_or_none(s.as_ref(), &th)).collect();
    Ok((th, labels))
}

/// `matcher_id,P,R,Res,Res_p,Cal,precise,thorough,correlated,calibrated`; undefined
/// measures are left blank and labels are `+1`/`-1`.
pub fn labels_csv(ids: &[&str], scores: &[Option<ExpertiseScores<f64>>], labels: &[LabelVector]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "matcher_id", "P", "R", "Res", "Res_p", "Cal", "precise", "thorough", "correlated", "calibrated",
    ])
    .expect("in-memory write");
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for ((id, s), l) in ids.iter().zip(scores).zip(labels) {
        let mut rec = vec![id.to_string()];
        rec.push(num(s.map(|s| s.precision)));
        rec.push(num(s.map(|s| s.recall)));
        rec.push(num(s.and_then(|s| s.resolution)));
        rec.push(num(s.and_then(|s| s.resolution_p)));
        rec.push(num(s.map(|s| s.calibration)));
        rec.extend(l.0.iter().map(|&b| if b { "+1" } else { "-1" }.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn heatmaps(session: &MatcherSession, bins: Bins) -> Result<HeatMapSet> {
    heatmaps_from_map(&session.movement, session.screen, bins)
}

/// Unstandardized features in schema order.
fn raw_features(
    session: &MatcherSession,
    families: FeatureFamilies,
    consensus: &ConsensusTable,
    fusion: Option<&FusionNets>,
    bins: Bins,
    idle: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(54);
    if families.lrsm() {
        out.extend(lrsm_features(&matrix_from_history::<f64>(&session.history, &session.task)?).to_vec());
    }
    if families.beh_mou() {
        out.extend(behavioral_features(&session.history)?.to_vec());
        out.extend(mouse_features(&session.movement, idle).to_vec());
    }
    if families.fused() {
        let nets = fusion.ok_or_else(|| Error::PipelineOrder("fusion nets are not trained".into()))?;
        out.extend(nets.seq.predict(&encode_sequence(session, consensus)?)?);
        out.extend(nets.spatial.predict(&heatmaps(session, bins)?)?);
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::ModelInput(format!(
            "{}: feature {} is not finite",
            session.matcher_id,
            families.schema()[i]
        )));
    }
    Ok(out)
}

/// A training session with its reference match.
pub type TrainItem<'a> = (&'a MatcherSession, &'a ReferenceMatch);

impl CharacterizerModel {
    pub fn train(data: &[TrainItem<'_>], cfg: &CharacterizerConfig) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Config(format!("training needs at least 2 sessions, got {}", data.len())));
        }
        if let Some((s, _)) = data.iter().find(|(s, _)| s.training_only) {
            return Err(Error::Protocol(format!("{} is a sub-matcher, not an original session", s.matcher_id)));
        }
        let task = &data[0].0.task;
        if data.iter().any(|(s, _)| s.task != *task) {
            return Err(Error::Config("training sessions must share one task".into()));
        }

        // labels and thresholds
        let scores = data
            .iter()
            .map(|(s, r)| assess_or_none(s, r, &cfg.permutation))
            .collect::<Result<Vec<_>>>()?;
        let (thresholds, labels) = fit_labels(&scores, cfg.thresholds)?;

        // sub-matchers
        let mut subs: Vec<(MatcherSession, LabelVector)> = Vec::new();
        for ((s, r), parent) in data.iter().zip(&labels) {
            for sub in sub_matchers(s, &cfg.plan) {
                let l = match cfg.label_source {
                    LabelSource::Recompute => label_sub_matcher(&sub, r, &thresholds, &cfg.permutation)?,
                    LabelSource::Inherit => *parent,
                };
                subs.push((sub, l));
            }
        }

        let matches = data
            .iter()
            .map(|(s, _)| final_match::<f64>(s))
            .collect::<Result<Vec<_>>>()?;
        let consensus = build_consensus(&matches, task)?;

        let fusion = if cfg.families.fused() {
            let pool: Vec<(&MatcherSession, LabelVector)> = data
                .iter()
                .map(|(s, _)| *s)
                .zip(labels.iter().copied())
                .chain(subs.iter().map(|(s, l)| (s, *l)))
                .filter(|(s, _)| !s.history.is_empty())
                .collect();
            let seqs = pool
                .iter()
                .map(|(s, l)| Ok(encode_sequence(s, &consensus)?.with_labels(*l)))
                .collect::<Result<Vec<_>>>()?;
            let seq_cfg = TrainerConfig {
                seed: rng::derive_seed(cfg.seed, "seq", 0),
                ..cfg.seq_trainer
            };
            let seq = SeqModel::train(cfg.seq_arch, &seqs, &seq_cfg)?;
            let maps = pool
                .iter()
                .map(|(s, _)| heatmaps(s, cfg.bins))
                .collect::<Result<Vec<_>>>()?;
            let spatial_samples: Vec<(&HeatMapSet, LabelVector)> =
                maps.iter().zip(pool.iter().map(|p| p.1)).collect();
            let spatial_cfg = TrainerConfig {
                seed: rng::derive_seed(cfg.seed, "spatial", 0),
                ..cfg.spatial_trainer
            };
            let spatial = SpatialSet::train(cfg.bins, &spatial_samples, &spatial_cfg)?;
            Some(FusionNets { seq, spatial })
        } else {
            None
        };

        let raw = data
            .iter()
            .map(|(s, _)| raw_features(s, cfg.families, &consensus, fusion.as_ref(), cfg.bins, cfg.idle_threshold))
            .collect::<Result<Vec<_>>>()?;
        let standardizer = Standardizer::fit(&raw);
        let x: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
        let classifiers = (0..4)
            .map(|c| {
                let y: Vec<bool> = labels.iter().map(|l| l.0[c]).collect();
                fit_label(&x, &y, &cfg.classifier, rng::derive_seed(cfg.seed, "classifier", c as u64))
            })
            .collect();

        Ok(CharacterizerModel {
            format: MODEL_FORMAT.into(),
            config: cfg.clone(),
            schema: cfg.families.schema(),
            standardizer,
            classifiers,
            thresholds,
            consensus,
            fusion,
            train_sessions: data.len(),
            sub_matchers: subs.len(),
        })
    }

    /// Standardized features of `session`.
    pub fn extract_features(&self, session: &MatcherSession) -> Result<FeatureVector> {
        let raw = raw_features(
            session,
            self.config.families,
            &self.consensus,
            self.fusion.as_ref(),
            self.config.bins,
            self.config.idle_threshold,
        )?;
        Ok(FeatureVector {
            names: self.schema.clone(),
            values: self.standardizer.apply(&raw),
        })
    }

    pub fn predict(&self, session: &MatcherSession) -> Result<Prediction> {
        let x = self.extract_features(session)?.values;
        let mut probabilities = [0.0; 4];
        let mut labels = LabelVector::NONE;
        for (c, clf) in self.classifiers.iter().enumerate() {
            probabilities[c] = clf.model.probability(&x);
            labels.0[c] = probabilities[c] >= 0.5;
        }
        Ok(Prediction { labels, probabilities })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: CharacterizerModel =
            serde_json::from_slice(bytes).map_err(|e| Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::parse("format", format!("expected {MODEL_FORMAT}, found {}", model.format)));
        }
        if model.classifiers.len() != 4 || model.standardizer.mean.len() != model.schema.len() {
            return Err(Error::parse("schema", "classifier count or feature dimension mismatch"));
        }
        if model.config.families.fused() != model.fusion.is_some() {
            return Err(Error::parse("fusion", "fusion nets do not match the feature families"));
        }
        Ok(model)
    }
}
