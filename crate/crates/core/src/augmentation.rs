//! Sub-matchers: contiguous decision windows used as extra training samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expertise::{assess, labels_or_none, LabelVector, PermutationConfig, ThresholdConfig};
use crate::session::{MatcherSession, MovementMap, ReferenceMatch};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub window_sizes: Vec<usize>,
    pub stride: usize,
    pub variant_name: String,
}

impl AugmentPlan {
    pub const VARIANTS: [&'static str; 3] = ["mexi_base", "mexi_50", "mexi_70"];

    pub fn new(window_sizes: Vec<usize>, stride: usize, variant_name: impl Into<String>) -> Result<Self> {
        if stride == 0 || window_sizes.contains(&0) {
            return Err(Error::Config("window sizes and stride must be >= 1".into()));
        }
        Ok(AugmentPlan {
            window_sizes,
            stride,
            variant_name: variant_name.into(),
        })
    }

    /// No augmentation.
    pub fn base() -> Self {
        AugmentPlan {
            window_sizes: Vec::new(),
            stride: 1,
            variant_name: "mexi_base".into(),
        }
    }

    pub fn variant(name: &str) -> Result<Self> {
        match name {
            "mexi_base" => Ok(Self::base()),
            "mexi_50" => Self::new(vec![50], 5, name),
            "mexi_70" => Self::new(vec![30, 40, 50, 60, 70], 10, name),
            _ => Err(Error::Config(format!(
                "unknown variant {name:?}; expected one of {}",
                Self::VARIANTS.join(", ")
            ))),
        }
    }

    /// Same windows with a different stride.
    pub fn with_stride(self, stride: usize) -> Result<Self> {
        Self::new(self.window_sizes, stride, self.variant_name)
    }
}

/// Window start offsets for `len` decisions: `0, stride, ...` plus the last
/// aligned window `len - w` when the stride overshoots it.
pub fn window_starts(len: usize, w: usize, stride: usize) -> Vec<usize> {
    if w == 0 || stride == 0 || w > len {
        return Vec::new();
    }
    let last = len - w;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}

fn window(session: &MatcherSession, start: usize, w: usize) -> MatcherSession {
    let history = session.history.window(start, w);
    let all = session.history.as_slice();
    let end_t = all[start + w - 1].t;
    // mouse activity leading up to the first decision belongs to the window
    let after = if start == 0 { f64::NEG_INFINITY } else { all[start - 1].t };
    let events = session
        .movement
        .as_slice()
        .iter()
        .filter(|e| e.t > after && e.t <= end_t)
        .copied()
        .collect();
    MatcherSession {
        matcher_id: format!("{}#w{w}s{start}", session.matcher_id),
        history,
        movement: MovementMap::new(events).expect("subsequence of a valid map"),
        warmup_count: session.warmup_count.saturating_sub(start).min(w),
        training_only: true,
        ..session.clone()
    }
}

/// Windows of every planned size; the original session is not included.
pub fn sub_matchers(session: &MatcherSession, plan: &AugmentPlan) -> Vec<MatcherSession> {
    let len = session.history.len();
    plan.window_sizes
        .iter()
        .flat_map(|&w| window_starts(len, w, plan.stride).into_iter().map(move |s| (s, w)))
        .map(|(s, w)| window(session, s, w))
        .collect()
}

/// How sub-matchers get their labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelSource {
    /// Measures recomputed on the window against the reference match.
    #[default]
    Recompute,
    /// The parent session's labels.
    Inherit,
}

/// Labels of a window from its own measures and the population thresholds.
/// A window whose final match is empty is labelled all `-1`.
pub fn label_sub_matcher(
    sub: &MatcherSession,
    reference: &ReferenceMatch,
    thresholds: &ThresholdConfig<f64>,
    perm: &PermutationConfig,
) -> Result<LabelVector> {
    match assess::<f64>(sub, reference, perm) {
        Ok(scores) => Ok(labels_or_none(Some(&scores), thresholds)),
        Err(Error::UndefinedMeasure(_)) => Ok(LabelVector::NONE),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expertise::labels_from_scores;
    use crate::session::{Decision, DecisionHistory, EventKind, MouseEvent, Screen, TaskSpec};
    use proptest::prelude::*;

    fn session(len: usize) -> MatcherSession {
        let task = TaskSpec::new("t", 20, 20).unwrap();
        let decisions = (0..len)
            .map(|i| Decision::new(i % 20, (i * 7) % 20, 0.5 + (i % 5) as f64 / 10.0, 1.0 + i as f64))
            .collect();
        let events = (0..len * 2)
            .map(|i| MouseEvent::new(10.0, 10.0, EventKind::Move, 0.5 * i as f64 + 0.75))
            .collect();
        MatcherSession::new(
            "p",
            task,
            Screen { w: 100.0, h: 100.0 },
            DecisionHistory::new(decisions).unwrap(),
            MovementMap::new(events).unwrap(),
            len.min(3),
        )
        .unwrap()
    }

    fn count_oracle(len: usize, w: usize, stride: usize) -> usize {
        if w > len {
            0
        } else {
            (len - w).div_ceil(stride) + 1
        }
    }

    #[test]
    fn fifty_five_decisions_give_two_windows() {
        let subs = sub_matchers(&session(55), &AugmentPlan::variant("mexi_50").unwrap());
        let starts: Vec<_> = subs.iter().map(|s| s.history.as_slice()[0].t).collect();
        assert_eq!(starts, vec![1.0, 6.0]);
        assert!(subs.iter().all(|s| s.training_only && s.history.len() == 50));
    }

    #[test]
    fn full_length_window_is_the_original() {
        let s = session(30);
        let plan = AugmentPlan::new(vec![30], 4, "x").unwrap();
        let subs = sub_matchers(&s, &plan);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].history, s.history);
        let last_t = s.history.as_slice()[29].t;
        assert_eq!(subs[0].movement, s.movement.between(0.0, last_t));
        assert_eq!(subs[0].warmup_count, 3);
    }

    #[test]
    fn oversized_window_yields_nothing() {
        assert!(sub_matchers(&session(10), &AugmentPlan::variant("mexi_50").unwrap()).is_empty());
        assert!(sub_matchers(&session(90), &AugmentPlan::base()).is_empty());
    }

    #[test]
    fn full_window_labels_match_session_labels() {
        let s = session(40);
        let reference = ReferenceMatch::new([(0, 0), (1, 7), (5, 15), (9, 9)]);
        let th = ThresholdConfig {
            delta_res: 0.1,
            delta_cal: 0.3,
            ..ThresholdConfig::default()
        };
        let perm = PermutationConfig::default();
        let sub = &sub_matchers(&s, &AugmentPlan::new(vec![40], 1, "x").unwrap())[0];
        let expected = labels_from_scores(&assess::<f64>(&s, &reference, &perm).unwrap(), &th);
        assert_eq!(label_sub_matcher(sub, &reference, &th, &perm).unwrap(), expected);
    }

    #[test]
    fn all_incorrect_window_is_not_precise() {
        let s = session(12);
        let reference = ReferenceMatch::new([(19, 0)]);
        let labels = label_sub_matcher(&s, &reference, &ThresholdConfig::default(), &PermutationConfig::default());
        assert!(!labels.unwrap().0[0]);
    }

    proptest! {
        #[test]
        fn window_count_matches_formula(len in 1usize..200, w in 1usize..120, stride in 1usize..30) {
            prop_assert_eq!(window_starts(len, w, stride).len(), count_oracle(len, w, stride));
        }

        #[test]
        fn windows_are_contiguous_clipped_subsequences(len in 1usize..80, w in 1usize..60, stride in 1usize..12) {
            let s = session(len);
            let plan = AugmentPlan::new(vec![w], stride, "p").unwrap();
            for sub in sub_matchers(&s, &plan) {
                let first = sub.history.as_slice()[0];
                let start = s.history.iter().position(|d| *d == first).unwrap();
                prop_assert_eq!(sub.history.as_slice(), &s.history.as_slice()[start..start + w]);
                let last_t = sub.history.as_slice()[w - 1].t;
                prop_assert!(sub.movement.as_slice().iter().all(|e| e.t <= last_t));
                prop_assert!(sub.training_only);
            }
        }
    }
}
