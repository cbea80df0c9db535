//! Expertise measures (precision, thoroughness, resolution, calibration),
//! population thresholds and the four-label characterization.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::session::{final_match, DecisionHistory, Match, MatcherSession, ReferenceMatch};

/// The four expert characteristics, in label-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Characteristic {
    Precise,
    Thorough,
    Correlated,
    Calibrated,
}

impl Characteristic {
    pub const ALL: [Characteristic; 4] = [
        Characteristic::Precise,
        Characteristic::Thorough,
        Characteristic::Correlated,
        Characteristic::Calibrated,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Characteristic::Precise => "precise",
            Characteristic::Thorough => "thorough",
            Characteristic::Correlated => "correlated",
            Characteristic::Calibrated => "calibrated",
        }
    }
}

/// `+1`/`-1` per characteristic, stored as `true`/`false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelVector(pub [bool; 4]);

impl LabelVector {
    pub const NONE: LabelVector = LabelVector([false; 4]);
    pub const ALL: LabelVector = LabelVector([true; 4]);

    pub fn get(&self, c: Characteristic) -> bool {
        self.0[c.index()]
    }

    pub fn sign(&self, c: Characteristic) -> i8 {
        if self.get(c) {
            1
        } else {
            -1
        }
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_all(&self) -> bool {
        self.0.iter().all(|&b| b)
    }
}

/// Raw expertise measures of one matcher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertiseScores<T> {
    pub precision: T,
    pub recall: T,
    /// Goodman-Kruskal gamma; `None` when no untied correct/incorrect pair exists.
    pub resolution: Option<T>,
    pub resolution_p: Option<T>,
    /// Mean reported confidence minus precision.
    pub calibration: T,
}

/// Concordant and discordant (correct, incorrect) pair counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GammaCounts {
    pub concordant: u64,
    pub discordant: u64,
}

impl GammaCounts {
    pub fn gamma<T: Scalar>(&self) -> Option<T> {
        let total = self.concordant + self.discordant;
        (total > 0).then(|| {
            (T::of(self.concordant as f64) - T::of(self.discordant as f64)) / T::of(total as f64)
        })
    }

    /// Exact `gamma(self) >= gamma(other)`; both must be defined.
    fn at_least(&self, other: &GammaCounts) -> bool {
        let (a, b) = (self.concordant as i128, self.discordant as i128);
        let (c, d) = (other.concordant as i128, other.discordant as i128);
        (a - b) * (c + d) >= (c - d) * (a + b)
    }
}

pub fn precision<T: Scalar>(sigma: &Match<T>, reference: &ReferenceMatch) -> Result<T> {
    if sigma.is_empty() {
        return Err(Error::UndefinedMeasure("precision of an empty match".into()));
    }
    let hits = sigma.pairs().filter(|&p| reference.contains(p)).count();
    Ok(T::of_usize(hits) / T::of_usize(sigma.len()))
}

pub fn recall<T: Scalar>(sigma: &Match<T>, reference: &ReferenceMatch) -> Result<T> {
    if reference.is_empty() {
        return Err(Error::Config("recall against an empty reference match".into()));
    }
    let hits = sigma.pairs().filter(|&p| reference.contains(p)).count();
    Ok(T::of_usize(hits) / T::of_usize(reference.len()))
}

/// Counts pairs by sorting the incorrect confidences once: `O(k log k)`.
pub fn gamma_counts<T: Scalar>(graded: &[(T, bool)]) -> GammaCounts {
    let mut wrong: Vec<T> = graded.iter().filter(|g| !g.1).map(|g| g.0).collect();
    wrong.sort_by(|a, b| a.partial_cmp(b).expect("confidences are not NaN"));
    let mut counts = GammaCounts { concordant: 0, discordant: 0 };
    for &(c, _) in graded.iter().filter(|g| g.1) {
        let below = wrong.partition_point(|&w| w < c);
        let above = wrong.len() - wrong.partition_point(|&w| w <= c);
        counts.concordant += below as u64;
        counts.discordant += above as u64;
    }
    counts
}

/// Settings for the one-sided permutation test on gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Enumerate every placement when there are at most this many.
    pub exhaustive_limit: u64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            exhaustive_limit: 10_000,
            samples: 10_000,
            seed: 0x6a6d_6d61,
        }
    }
}

/// Confidences sorted once into tie groups so one labelling is scored in `O(k)`.
struct TieGroups {
    /// Group id of every entry.
    group: Vec<usize>,
    groups: usize,
}

impl TieGroups {
    fn new<T: Scalar>(confidences: &[T]) -> Self {
        let mut order: Vec<usize> = (0..confidences.len()).collect();
        order.sort_by(|&a, &b| confidences[a].partial_cmp(&confidences[b]).expect("not NaN"));
        let mut group = vec![0; confidences.len()];
        let mut g = 0;
        for (pos, &idx) in order.iter().enumerate() {
            if pos > 0 && confidences[idx] != confidences[order[pos - 1]] {
                g += 1;
            }
            group[idx] = g;
        }
        TieGroups {
            group,
            groups: if confidences.is_empty() { 0 } else { g + 1 },
        }
    }

    fn counts(&self, correct: &[bool], scratch: &mut [(u64, u64)]) -> GammaCounts {
        scratch.iter_mut().for_each(|s| *s = (0, 0));
        for (idx, &ok) in correct.iter().enumerate() {
            let s = &mut scratch[self.group[idx]];
            if ok {
                s.0 += 1;
            } else {
                s.1 += 1;
            }
        }
        let total_wrong: u64 = scratch[..self.groups].iter().map(|s| s.1).sum();
        let mut wrong_below = 0;
        let mut counts = GammaCounts { concordant: 0, discordant: 0 };
        for &(right, wrong) in &scratch[..self.groups] {
            counts.concordant += right * wrong_below;
            counts.discordant += right * (total_wrong - wrong_below - wrong);
            wrong_below += wrong;
        }
        counts
    }
}

/// `n choose k`, saturating just above `cap`.
fn binomial_capped(n: usize, k: usize, cap: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return cap + 1;
        }
    }
    acc as u64
}

/// Visits every `k`-subset of `0..n` as a boolean mask.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[bool])) {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut mask = vec![false; n];
    loop {
        mask.iter_mut().for_each(|m| *m = false);
        for &i in &idx {
            mask[i] = true;
        }
        visit(&mask);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// One-sided p-value of observing a gamma at least as large as the observed one
/// when correctness is reassigned at random among the entries.
pub fn permutation_p_value<T: Scalar>(graded: &[(T, bool)], cfg: &PermutationConfig) -> Option<T> {
    let observed = gamma_counts(graded);
    observed.gamma::<T>()?;
    let confidences: Vec<T> = graded.iter().map(|g| g.0).collect();
    let groups = TieGroups::new(&confidences);
    let mut scratch = vec![(0u64, 0u64); groups.groups];
    let n = graded.len();
    let n_correct = graded.iter().filter(|g| g.1).count();
    let placements = binomial_capped(n, n_correct, cfg.exhaustive_limit);

    let mut hits = 0u64;
    let mut total = 0u64;
    let mut score = |mask: &[bool], scratch: &mut [(u64, u64)]| {
        let c = groups.counts(mask, scratch);
        total += 1;
        if c.concordant + c.discordant > 0 && c.at_least(&observed) {
            hits += 1;
        }
    };
    if placements <= cfg.exhaustive_limit {
        for_each_subset(n, n_correct, |mask| score(mask, &mut scratch));
    } else {
        let mut rng = rng::rng(cfg.seed);
        let mut mask: Vec<bool> = graded.iter().map(|g| g.1).collect();
        for _ in 0..cfg.samples {
            mask.shuffle(&mut rng);
            score(&mask, &mut scratch);
        }
    }
    Some(T::of(hits as f64) / T::of(total as f64))
}

/// Gamma between confidence and correctness over the final match, with its p-value.
pub fn resolution<T: Scalar>(
    sigma: &Match<T>,
    reference: &ReferenceMatch,
    cfg: &PermutationConfig,
) -> (Option<T>, Option<T>) {
    let graded: Vec<(T, bool)> = sigma
        .entries()
        .iter()
        .map(|e| (e.confidence, reference.contains((e.row, e.col))))
        .collect();
    let gamma = gamma_counts(&graded).gamma();
    let p = gamma.and_then(|_| permutation_p_value(&graded, cfg));
    (gamma, p)
}

/// Mean confidence over every history entry minus precision of the final match.
pub fn calibration<T: Scalar>(history: &DecisionHistory, sigma: &Match<T>, reference: &ReferenceMatch) -> Result<T> {
    let mean = history
        .mean_confidence()
        .ok_or_else(|| Error::UndefinedMeasure("calibration of an empty history".into()))?;
    Ok(T::of(mean) - precision(sigma, reference)?)
}

/// All four measures for a history. Fails with `UndefinedMeasure` on an empty match.
pub fn assess<T: Scalar>(
    session: &MatcherSession,
    reference: &ReferenceMatch,
    cfg: &PermutationConfig,
) -> Result<ExpertiseScores<T>> {
    let sigma = final_match::<T>(session)?;
    let precision = precision(&sigma, reference)?;
    let recall = recall(&sigma, reference)?;
    let (resolution, resolution_p) = resolution(&sigma, reference, cfg);
    let calibration = calibration(&session.history, &sigma, reference)?;
    Ok(ExpertiseScores {
        precision,
        recall,
        resolution,
        resolution_p,
        calibration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig<T> {
    pub delta_p: T,
    pub delta_r: T,
    pub delta_res: T,
    pub delta_cal: T,
    pub p_significance: T,
    /// Nearest-rank percentile of training resolutions used for `delta_res`.
    pub res_percentile: u32,
    /// Nearest-rank percentile of training `|calibration|` used for `delta_cal`.
    pub cal_percentile: u32,
}

impl<T: Scalar> Default for ThresholdConfig<T> {
    fn default() -> Self {
        ThresholdConfig {
            delta_p: T::of(0.5),
            delta_r: T::of(0.5),
            delta_res: T::zero(),
            delta_cal: T::zero(),
            p_significance: T::of(0.05),
            res_percentile: 80,
            cal_percentile: 20,
        }
    }
}

/// Nearest-rank percentile: the value at rank `ceil(pct / 100 * N)` of the sorted sample.
pub fn nearest_rank<T: Scalar>(values: &[T], pct: u32) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("not NaN"));
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).clamp(1, n);
    Some(sorted[rank - 1])
}

/// Fits `delta_res` and `delta_cal` on a training population; `delta_p`,
/// `delta_r` and the significance level come from `defaults`.
pub fn fit_thresholds<T: Scalar>(
    train: &[ExpertiseScores<T>],
    defaults: ThresholdConfig<T>,
) -> Result<ThresholdConfig<T>> {
    if train.is_empty() {
        return Err(Error::Config("cannot fit thresholds on an empty population".into()));
    }
    let resolutions: Vec<T> = train.iter().filter_map(|s| s.resolution).collect();
    let abs_cal: Vec<T> = train.iter().map(|s| s.calibration.abs()).collect();
    Ok(ThresholdConfig {
        // no defined resolution anywhere: nobody can exceed 1
        delta_res: nearest_rank(&resolutions, defaults.res_percentile).unwrap_or_else(T::one),
        delta_cal: nearest_rank(&abs_cal, defaults.cal_percentile).expect("non-empty"),
        ..defaults
    })
}

pub fn labels_from_scores<T: Scalar>(scores: &ExpertiseScores<T>, th: &ThresholdConfig<T>) -> LabelVector {
    let correlated = match (scores.resolution, scores.resolution_p) {
        (Some(res), Some(p)) => res > th.delta_res && p < th.p_significance,
        _ => false,
    };
    LabelVector([
        scores.precision > th.delta_p,
        scores.recall > th.delta_r,
        correlated,
        scores.calibration.abs() < th.delta_cal,
    ])
}

/// Labels for a possibly undefined assessment; undefined matchers get all `-1`.
pub fn labels_or_none<T: Scalar>(scores: Option<&ExpertiseScores<T>>, th: &ThresholdConfig<T>) -> LabelVector {
    scores.map_or(LabelVector::NONE, |s| labels_from_scores(s, th))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{match_of, matrix_from_history, MatchEntry, TaskSpec};
    use crate::testutil::worked_history;

    fn reference() -> ReferenceMatch {
        ReferenceMatch::new([(0, 0), (0, 1), (1, 2), (2, 3)])
    }

    fn worked_match() -> Match<f64> {
        match_of(&matrix_from_history(&worked_history(), &TaskSpec::new("po", 3, 4).unwrap()).unwrap())
    }

    #[test]
    fn worked_precision_recall() {
        assert_eq!(precision(&worked_match(), &reference()).unwrap(), 0.75);
        assert_eq!(recall(&worked_match(), &reference()).unwrap(), 0.75);
    }

    #[test]
    fn worked_resolution_and_p() {
        let (g, p) = resolution(&worked_match(), &reference(), &PermutationConfig::default());
        assert_eq!(g, Some(1.0));
        assert_eq!(p, Some(0.25));
    }

    #[test]
    fn worked_calibration_follows_formula() {
        let cal = calibration(&worked_history(), &worked_match(), &reference()).unwrap();
        assert!((cal - (0.67 - 0.75)).abs() < 1e-12, "{cal}");
    }

    #[test]
    fn perfect_match_and_empty_cases() {
        let sigma = Match::new(reference().iter().map(|(row, col)| MatchEntry { row, col, confidence: 0.9 }).collect())
            .unwrap();
        assert_eq!(precision(&sigma, &reference()).unwrap(), 1.0f64);
        let empty = Match::<f64>::new(vec![]).unwrap();
        assert!(matches!(precision(&empty, &reference()), Err(Error::UndefinedMeasure(_))));
        assert_eq!(recall(&empty, &reference()).unwrap(), 0.0);
        assert!(matches!(recall(&sigma, &ReferenceMatch::default()), Err(Error::Config(_))));
    }

    #[test]
    fn all_ties_leave_gamma_undefined() {
        let graded = [(0.5f64, true), (0.5, false), (0.5, true)];
        assert_eq!(gamma_counts(&graded).gamma::<f64>(), None);
        assert_eq!(permutation_p_value(&graded, &PermutationConfig::default()), None);
        let single_class = [(0.2f64, true), (0.9, true)];
        assert_eq!(gamma_counts(&single_class).gamma::<f64>(), None);
    }

    #[test]
    fn worked_labels() {
        let scores = ExpertiseScores {
            precision: 0.75,
            recall: 0.75,
            resolution: Some(1.0),
            resolution_p: Some(0.25),
            calibration: 0.67 - 0.75,
        };
        let th = ThresholdConfig {
            delta_res: 0.5,
            delta_cal: 0.205,
            ..ThresholdConfig::default()
        };
        assert_eq!(labels_from_scores(&scores, &th), LabelVector([true, true, false, true]));
        let significant = ExpertiseScores { resolution_p: Some(0.01), ..scores };
        assert!(labels_from_scores(&significant, &th).get(Characteristic::Correlated));
        assert_eq!(labels_or_none::<f64>(None, &th), LabelVector::NONE);
    }

    #[test]
    fn constant_population_thresholds() {
        let s = ExpertiseScores {
            precision: 0.5,
            recall: 0.5,
            resolution: Some(0.3),
            resolution_p: Some(0.5),
            calibration: -0.1,
        };
        let th = fit_thresholds(&[s; 7], ThresholdConfig::default()).unwrap();
        assert_eq!(th.delta_res, 0.3);
        assert_eq!(th.delta_cal, 0.1);
        assert_eq!(th.delta_p, 0.5);
        assert!(fit_thresholds::<f64>(&[], ThresholdConfig::default()).is_err());
    }

    #[test]
    fn nearest_rank_small_cases() {
        let v = [5.0f64, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(nearest_rank(&v, 80), Some(4.0));
        assert_eq!(nearest_rank(&v, 20), Some(1.0));
        assert_eq!(nearest_rank(&v, 100), Some(5.0));
        assert_eq!(nearest_rank(&v, 0), Some(1.0));
    }

    #[test]
    fn subsets_enumerated_once() {
        let mut seen = std::collections::BTreeSet::new();
        for_each_subset(6, 3, |m| {
            assert_eq!(m.iter().filter(|&&b| b).count(), 3);
            assert!(seen.insert(m.to_vec()));
        });
        assert_eq!(seen.len(), 20);
        let mut count = 0;
        for_each_subset(4, 0, |_| count += 1);
        for_each_subset(4, 4, |_| count += 1);
        assert_eq!(count, 2);
    }

    #[test]
    fn f32_measures_agree() {
        let m: Match<f32> = match_of(&matrix_from_history(&worked_history(), &TaskSpec::new("po", 3, 4).unwrap()).unwrap());
        assert_eq!(precision(&m, &reference()).unwrap(), 0.75f32);
        assert_eq!(resolution(&m, &reference(), &PermutationConfig::default()).0, Some(1.0f32));
    }
}
