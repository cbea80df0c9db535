//! Synthetic matcher sessions following four archetypes:
//!
//! * `A` precise and thorough, confident when correct, well calibrated;
//! * `B` imprecise and incomplete, over-confident, never inspects element metadata;
//! * `C` precise but incomplete, slow, concentrates on the top of the target schema;
//! * `D` precise and thorough but uncorrelated, under-confident and disorganized.
//!
//! A session is a pure function of `(task, reference, params, seed)`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::sigmoid;
use crate::session::{
    Decision, DecisionHistory, EventKind, MatcherSession, MouseEvent, MovementMap, ReferenceMatch, Screen, TaskSpec,
};

pub const SCREEN: Screen = Screen { w: 1280.0, h: 800.0 };
pub const WARMUP_DECISIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    A,
    B,
    C,
    D,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [Archetype::A, Archetype::B, Archetype::C, Archetype::D];

    pub fn describe(self) -> &'static str {
        match self {
            Archetype::A => "precise+thorough",
            Archetype::B => "imprecise+incomplete",
            Archetype::C => "precise+incomplete",
            Archetype::D => "precise+thorough+uncorrelated+miscalibrated",
        }
    }
}

/// Screen areas of the matching interface that mouse activity gravitates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Element properties box, top left.
    Metadata,
    SourceTree,
    TargetTree,
    /// Upper part of the target tree only.
    TargetTop,
    MatchTable,
    /// Anywhere on screen.
    Anywhere,
}

impl Region {
    /// Gaussian centre and spread in pixels; `None` for uniform placement.
    fn shape(self) -> Option<((f64, f64), (f64, f64))> {
        match self {
            Region::Metadata => Some(((200.0, 120.0), (80.0, 50.0))),
            Region::SourceTree => Some(((320.0, 450.0), (110.0, 170.0))),
            Region::TargetTree => Some(((950.0, 420.0), (110.0, 190.0))),
            Region::TargetTop => Some(((950.0, 190.0), (110.0, 60.0))),
            Region::MatchTable => Some(((640.0, 705.0), (200.0, 35.0))),
            Region::Anywhere => None,
        }
    }

    fn sample(self, rng: &mut Rng) -> (f64, f64) {
        match self.shape() {
            Some(((cx, cy), (sx, sy))) => {
                let x = Normal::new(cx, sx).expect("valid spread").sample(rng);
                let y = Normal::new(cy, sy).expect("valid spread").sample(rng);
                (x.clamp(0.0, SCREEN.w), y.clamp(0.0, SCREEN.h))
            }
            None => (rng.random_range(0.0..=SCREEN.w), rng.random_range(0.0..=SCREEN.h)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    /// Target Goodman-Kruskal gamma between confidence and correctness.
    pub gamma_target: f64,
    /// Target mean confidence minus precision.
    pub bias: f64,
    /// Per-session uniform jitter added to `bias`.
    pub bias_jitter: f64,
    /// Spread of the latent confidence score.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MouseModel {
    pub regions: Vec<(Region, f64)>,
    /// Mean number of waypoints visited between two decisions.
    pub waypoints_per_decision: f64,
    pub click_prob: f64,
    pub right_click_prob: f64,
    pub scroll_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeParams {
    pub archetype: Archetype,
    /// Probability that a decided pair belongs to the reference match (target precision).
    pub p_correct: f64,
    /// Target fraction of the reference match covered (target recall).
    pub coverage: f64,
    /// Uniform integer jitter applied to the correct and incorrect pair counts.
    pub count_jitter: i64,
    /// Probability that a final decision was preceded by a superseded one on the same pair.
    pub revisit_rate: f64,
    pub confidence: ConfidenceModel,
    /// Median seconds between decisions and log-normal shape.
    pub gap_median: f64,
    pub gap_sigma: f64,
    pub mouse: MouseModel,
}

impl ArchetypeParams {
    pub fn default_for(archetype: Archetype) -> Self {
        use Region::*;
        let mouse = |regions: Vec<(Region, f64)>, waypoints, click, right, scroll| MouseModel {
            regions,
            waypoints_per_decision: waypoints,
            click_prob: click,
            right_click_prob: right,
            scroll_prob: scroll,
        };
        match archetype {
            Archetype::A => ArchetypeParams {
                archetype,
                p_correct: 0.85,
                coverage: 0.75,
                count_jitter: 3,
                revisit_rate: 0.15,
                confidence: ConfidenceModel {
                    gamma_target: 0.9,
                    bias: 0.0,
                    bias_jitter: 0.03,
                    noise: 1.0,
                },
                gap_median: 7.0,
                gap_sigma: 0.35,
                mouse: mouse(
                    vec![(Metadata, 0.25), (SourceTree, 0.3), (TargetTree, 0.3), (MatchTable, 0.15)],
                    4.0,
                    0.35,
                    0.02,
                    0.15,
                ),
            },
            Archetype::B => ArchetypeParams {
                archetype,
                p_correct: 0.25,
                coverage: 0.2,
                count_jitter: 3,
                revisit_rate: 0.05,
                confidence: ConfidenceModel {
                    gamma_target: 0.1,
                    bias: 0.35,
                    bias_jitter: 0.05,
                    noise: 1.0,
                },
                gap_median: 4.0,
                gap_sigma: 0.8,
                mouse: mouse(
                    vec![(SourceTree, 0.3), (TargetTree, 0.3), (MatchTable, 0.4)],
                    2.5,
                    0.5,
                    0.05,
                    0.05,
                ),
            },
            Archetype::C => ArchetypeParams {
                archetype,
                p_correct: 0.85,
                coverage: 0.12,
                count_jitter: 2,
                revisit_rate: 0.1,
                confidence: ConfidenceModel {
                    gamma_target: 0.5,
                    bias: -0.12,
                    bias_jitter: 0.03,
                    noise: 1.0,
                },
                gap_median: 22.0,
                gap_sigma: 0.4,
                mouse: mouse(
                    vec![(Metadata, 0.2), (SourceTree, 0.25), (TargetTop, 0.45), (MatchTable, 0.1)],
                    6.0,
                    0.3,
                    0.02,
                    0.05,
                ),
            },
            Archetype::D => ArchetypeParams {
                archetype,
                p_correct: 0.8,
                coverage: 0.7,
                count_jitter: 3,
                revisit_rate: 0.3,
                confidence: ConfidenceModel {
                    gamma_target: 0.0,
                    bias: -0.3,
                    bias_jitter: 0.04,
                    noise: 1.0,
                },
                gap_median: 8.0,
                gap_sigma: 1.0,
                mouse: mouse(
                    vec![(Anywhere, 0.5), (SourceTree, 0.15), (TargetTree, 0.15), (MatchTable, 0.1), (Metadata, 0.1)],
                    5.0,
                    0.3,
                    0.15,
                    0.3,
                ),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let probs = [
            self.p_correct,
            self.coverage,
            self.revisit_rate,
            self.mouse.click_prob,
            self.mouse.right_click_prob,
            self.mouse.scroll_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.p_correct == 0.0 || self.coverage == 0.0 {
            return Err(Error::Config(format!("{:?}: probabilities must lie in (0, 1]", self.archetype)));
        }
        if !(-1.0..1.0).contains(&self.confidence.gamma_target) {
            return Err(Error::Config("gamma target must lie in [-1, 1)".into()));
        }
        if self.mouse.regions.is_empty() || self.mouse.regions.iter().any(|r| r.1 < 0.0) {
            return Err(Error::Config("mouse model needs non-negative region weights".into()));
        }
        Ok(())
    }
}

/// Samples a one-to-one reference match of `floor(density * n * m)` pairs.
pub fn generate_task(task_id: &str, n: usize, m: usize, ref_density: f64, seed: u64) -> Result<(TaskSpec, ReferenceMatch)> {
    let task = TaskSpec::new(task_id, n, m)?;
    let count = (ref_density * (n * m) as f64 + 1e-9).floor() as usize;
    if !(ref_density > 0.0) || count == 0 || count > n.min(m) {
        return Err(Error::Config(format!(
            "reference density {ref_density} infeasible for a one-to-one match on {n}x{m}"
        )));
    }
    let mut r = rng::child_rng(seed, "task", 0);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..m).collect();
    rows.shuffle(&mut r);
    cols.shuffle(&mut r);
    Ok((task, ReferenceMatch::new(rows.into_iter().zip(cols).take(count))))
}

fn jittered(rng: &mut Rng, mean: f64, jitter: i64, lo: i64, hi: i64) -> usize {
    // randomized rounding keeps the expectation at `mean`
    let base = mean.floor();
    let up = rng.random::<f64>() < mean - base;
    let noise = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
    (base as i64 + i64::from(up) + noise).clamp(lo, hi.max(lo)) as usize
}

/// Shift `a` so the mean of `sigmoid(scale * z + a)` hits `target`.
fn solve_offset(latent: &[f64], scale: f64, target: f64) -> f64 {
    let mean = |a: f64| latent.iter().map(|&z| sigmoid(scale * z + a)).sum::<f64>() / latent.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn pick_region(rng: &mut Rng, regions: &[(Region, f64)]) -> Region {
    regions
        .choose_weighted(rng, |r| r.1)
        .map(|r| r.0)
        .unwrap_or(Region::Anywhere)
}

pub fn generate_session(
    task: &TaskSpec,
    reference: &ReferenceMatch,
    params: &ArchetypeParams,
    matcher_id: &str,
    seed: u64,
) -> Result<MatcherSession> {
    params.validate()?;
    reference.validate(task)?;
    if reference.is_empty() {
        return Err(Error::Config("reference match is empty".into()));
    }
    let mut r = rng::rng(seed);
    let refs: Vec<(usize, usize)> = reference.iter().collect();
    let j = params.count_jitter;

    // distinct final pairs
    let n_correct = jittered(&mut r, params.coverage * refs.len() as f64, j, 1, refs.len() as i64);
    let wrong_mean = n_correct as f64 * (1.0 - params.p_correct) / params.p_correct;
    let free_cells = task.cells() - refs.len();
    let n_wrong = jittered(&mut r, wrong_mean, j, 0, free_cells as i64);
    let mut pairs: Vec<((usize, usize), bool)> = refs.choose_multiple(&mut r, n_correct).map(|&p| (p, true)).collect();
    let mut wrong = std::collections::BTreeSet::new();
    while wrong.len() < n_wrong {
        let p = (r.random_range(0..task.n), r.random_range(0..task.m));
        if !reference.contains(p) {
            wrong.insert(p);
        }
    }
    pairs.extend(wrong.into_iter().map(|p| (p, false)));
    pairs.shuffle(&mut r);

    // latent confidence scores: correct entries shifted so that P(concordant) = (1 + gamma) / 2
    let shift = std::f64::consts::SQRT_2
        * StdNormal::standard().inverse_cdf((1.0 + params.confidence.gamma_target) / 2.0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    // (pair, latent, superseded) in decision order
    let mut stream: Vec<((usize, usize), f64)> = Vec::new();
    let mut superseded = 0usize;
    for &(pair, correct) in &pairs {
        if r.random::<f64>() < params.revisit_rate {
            // an earlier decision on the same pair, inserted at a random earlier slot
            let at = r.random_range(0..=stream.len());
            stream.insert(at, (pair, noise.sample(&mut r) - shift / 2.0));
            superseded += 1;
        }
        let z = noise.sample(&mut r) + if correct { shift / 2.0 } else { -shift / 2.0 };
        stream.push((pair, z));
    }
    // superseded entries must precede the final one on their pair
    let mut seen = std::collections::BTreeMap::new();
    for (idx, (pair, _)) in stream.iter().enumerate() {
        seen.insert(*pair, idx);
    }
    debug_assert_eq!(stream.len(), pairs.len() + superseded);

    let precision = n_correct as f64 / pairs.len() as f64;
    let bias = params.confidence.bias + r.random_range(-1.0..=1.0) * params.confidence.bias_jitter;
    let target_mean = (precision + bias).clamp(0.02, 0.98);
    let latent: Vec<f64> = stream.iter().map(|s| s.1).collect();
    let offset = solve_offset(&latent, params.confidence.noise, target_mean);

    // timing
    let gaps = LogNormal::new(params.gap_median.ln(), params.gap_sigma).expect("valid log-normal");
    let mut t = r.random_range(2.0..5.0);
    let mut decisions = Vec::with_capacity(stream.len());
    for (k, &(pair, z)) in stream.iter().enumerate() {
        if k > 0 {
            t += gaps.sample(&mut r).max(0.2);
        }
        // keep three decimals so the log stays readable; strictly increasing by construction
        let stamp = (t * 1000.0).round() / 1000.0;
        decisions.push(Decision::new(pair.0, pair.1, sigmoid(params.confidence.noise * z + offset), stamp));
    }
    let history = DecisionHistory::new(decisions)?;

    let movement = generate_movement(&mut r, &history, &params.mouse)?;
    MatcherSession::new(
        matcher_id,
        task.clone(),
        SCREEN,
        history,
        movement,
        WARMUP_DECISIONS.min(stream.len()),
    )
}

fn generate_movement(r: &mut Rng, history: &DecisionHistory, mouse: &MouseModel) -> Result<MovementMap> {
    let mut events = Vec::new();
    let mut pos = (SCREEN.w / 2.0, SCREEN.h / 2.0);
    let mut start = 0.0;
    for d in history.iter() {
        let span = d.t - start;
        let lambda = mouse.waypoints_per_decision.max(0.1);
        let waypoints = (Poisson::new(lambda).expect("positive rate").sample(r) as usize).max(1);
        let mut times: Vec<f64> = (0..waypoints).map(|_| start + r.random::<f64>() * span).collect();
        times.sort_by(f64::total_cmp);
        for (w, &wt) in times.iter().enumerate() {
            let target = if w + 1 == waypoints {
                Region::MatchTable.sample(r)
            } else {
                pick_region(r, &mouse.regions).sample(r)
            };
            // linear interpolation between waypoints
            let prev_t = events.last().map_or(start, |e: &MouseEvent| e.t);
            for s in 1..=3 {
                let f = s as f64 / 3.0;
                let x = pos.0 + (target.0 - pos.0) * f;
                let y = pos.1 + (target.1 - pos.1) * f;
                let et = if s == 3 { wt } else { (prev_t + (wt - prev_t) * f).min(wt) };
                events.push(MouseEvent::new(x, y, EventKind::Move, et));
            }
            pos = target;
            if r.random::<f64>() < mouse.scroll_prob {
                events.push(MouseEvent::new(pos.0, pos.1, EventKind::Scroll, wt));
            }
            if r.random::<f64>() < mouse.right_click_prob {
                events.push(MouseEvent::new(pos.0, pos.1, EventKind::RightClick, wt));
            }
            if w + 1 == waypoints || r.random::<f64>() < mouse.click_prob {
                events.push(MouseEvent::new(pos.0, pos.1, EventKind::LeftClick, wt));
            }
        }
        start = d.t;
    }
    MovementMap::new(events)
}

/// A generated session with its archetype, kept apart from the session itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMatcher {
    pub session: MatcherSession,
    pub archetype: Archetype,
}

pub fn generate_population(
    spec: &[(ArchetypeParams, usize)],
    task: &TaskSpec,
    reference: &ReferenceMatch,
    seed: u64,
) -> Result<Vec<GeneratedMatcher>> {
    let total: usize = spec.iter().map(|s| s.1).sum();
    let width = total.to_string().len().max(3);
    let mut out = Vec::with_capacity(total);
    for (params, count) in spec {
        if *count == 0 {
            return Err(Error::Config(format!("{:?}: count must be >= 1", params.archetype)));
        }
        for _ in 0..*count {
            let idx = out.len();
            let id = format!("m{:0width$}", idx + 1);
            let session = generate_session(task, reference, params, &id, rng::derive_seed(seed, "session", idx as u64))?;
            out.push(GeneratedMatcher {
                session,
                archetype: params.archetype,
            });
        }
    }
    Ok(out)
}

/// Four archetypes, `per_archetype` sessions each.
pub fn default_population_spec(per_archetype: usize) -> Vec<(ArchetypeParams, usize)> {
    Archetype::ALL
        .iter()
        .map(|&a| (ArchetypeParams::default_for(a), per_archetype))
        .collect()
}

/// Shape of a generated benchmark: one task and an equal number of sessions per archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub task_id: String,
    pub n: usize,
    pub m: usize,
    pub reference_pairs: usize,
    pub per_archetype: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            task_id: "synthetic".into(),
            n: 60,
            m: 60,
            reference_pairs: 50,
            per_archetype: 30,
        }
    }
}

pub fn benchmark(spec: &BenchmarkSpec, seed: u64) -> Result<(TaskSpec, ReferenceMatch, Vec<GeneratedMatcher>)> {
    let cells = (spec.n * spec.m) as f64;
    let (task, reference) = generate_task(
        &spec.task_id,
        spec.n,
        spec.m,
        spec.reference_pairs as f64 / cells,
        rng::derive_seed(seed, "task", 0),
    )?;
    let population = generate_population(
        &default_population_spec(spec.per_archetype),
        &task,
        &reference,
        rng::derive_seed(seed, "population", 0),
    )?;
    Ok((task, reference, population))
}

/// [`benchmark`] on a 60x60 task with 50 reference pairs.
pub fn default_benchmark(per_archetype: usize, seed: u64) -> Result<(TaskSpec, ReferenceMatch, Vec<GeneratedMatcher>)> {
    benchmark(
        &BenchmarkSpec {
            per_archetype,
            ..BenchmarkSpec::default()
        },
        seed,
    )
}

/// Ground truth written next to generated sessions; for test harnesses only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub task_id: String,
    pub matchers: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub matcher_id: String,
    pub archetype: Archetype,
}

impl Manifest {
    pub fn of(seed: u64, task: &TaskSpec, population: &[GeneratedMatcher]) -> Self {
        Manifest {
            seed,
            task_id: task.task_id.clone(),
            matchers: population
                .iter()
                .map(|g| ManifestEntry {
                    matcher_id: g.session.matcher_id.clone(),
                    archetype: g.archetype,
                })
                .collect(),
        }
    }
}
