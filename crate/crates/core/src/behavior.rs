//! Aggregated behavioral features of histories and movement maps, and the
//! training-set consensus table.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::mean_std;
use crate::session::{DecisionHistory, Match, MovementMap, TaskSpec};

pub const BEHAVIOR_NAMES: [&str; 11] = [
    "avg_conf",
    "std_conf",
    "min_conf",
    "max_conf",
    "avg_time_gap",
    "std_time_gap",
    "max_time_gap",
    "total_duration",
    "n_decisions",
    "n_distinct_pairs",
    "n_mind_changes",
];

pub const MOUSE_NAMES: [&str; 12] = [
    "total_path_length",
    "total_time",
    "avg_x",
    "avg_y",
    "std_x",
    "std_y",
    "n_moves",
    "n_left",
    "n_right",
    "n_scrolls",
    "avg_speed",
    "idle_ratio",
];

/// Default gap (seconds) above which the mouse counts as idle.
pub const DEFAULT_IDLE_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralVector {
    pub avg_conf: f64,
    pub std_conf: f64,
    pub min_conf: f64,
    pub max_conf: f64,
    pub avg_time_gap: f64,
    pub std_time_gap: f64,
    pub max_time_gap: f64,
    pub total_duration: f64,
    pub n_decisions: usize,
    pub n_distinct_pairs: usize,
    /// Decisions that revisit an already decided pair.
    pub n_mind_changes: usize,
}

impl BehavioralVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.avg_conf,
            self.std_conf,
            self.min_conf,
            self.max_conf,
            self.avg_time_gap,
            self.std_time_gap,
            self.max_time_gap,
            self.total_duration,
            self.n_decisions as f64,
            self.n_distinct_pairs as f64,
            self.n_mind_changes as f64,
        ]
    }
}

pub fn behavioral_features(history: &DecisionHistory) -> Result<BehavioralVector> {
    let d = history.as_slice();
    if d.is_empty() {
        return Err(Error::UndefinedMeasure("behavioral features of an empty history".into()));
    }
    let conf: Vec<f64> = d.iter().map(|x| x.confidence).collect();
    let gaps: Vec<f64> = d.windows(2).map(|w| w[1].t - w[0].t).collect();
    let (avg_conf, std_conf) = mean_std(&conf);
    let (avg_gap, std_gap) = mean_std(&gaps);
    let distinct: BTreeSet<_> = d.iter().map(|x| x.pair()).collect();
    Ok(BehavioralVector {
        avg_conf,
        std_conf,
        min_conf: conf.iter().copied().fold(f64::INFINITY, f64::min),
        max_conf: conf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        avg_time_gap: avg_gap,
        std_time_gap: std_gap,
        max_time_gap: gaps.iter().copied().fold(0.0, f64::max),
        total_duration: d[d.len() - 1].t - d[0].t,
        n_decisions: d.len(),
        n_distinct_pairs: distinct.len(),
        n_mind_changes: d.len() - distinct.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MouseVector {
    pub total_path_length: f64,
    pub total_time: f64,
    pub avg_x: f64,
    pub avg_y: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub n_moves: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub n_scrolls: usize,
    /// Path length over the time spent in non-idle gaps.
    pub avg_speed: f64,
    pub idle_ratio: f64,
}

impl MouseVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.total_path_length,
            self.total_time,
            self.avg_x,
            self.avg_y,
            self.std_x,
            self.std_y,
            self.n_moves as f64,
            self.n_left as f64,
            self.n_right as f64,
            self.n_scrolls as f64,
            self.avg_speed,
            self.idle_ratio,
        ]
    }
}

pub fn mouse_features(map: &MovementMap, idle_threshold: f64) -> MouseVector {
    use crate::session::EventKind;

    let e = map.as_slice();
    let xs: Vec<f64> = e.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = e.iter().map(|p| p.y).collect();
    let (avg_x, std_x) = mean_std(&xs);
    let (avg_y, std_y) = mean_std(&ys);
    let mut path = 0.0;
    let mut active = 0.0;
    let mut idle = 0usize;
    for w in e.windows(2) {
        path += (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
        let gap = w[1].t - w[0].t;
        if gap > idle_threshold {
            idle += 1;
        } else {
            active += gap;
        }
    }
    let count = |k: EventKind| e.iter().filter(|p| p.kind == k).count();
    let gaps = e.len().saturating_sub(1);
    MouseVector {
        total_path_length: path,
        total_time: if e.is_empty() { 0.0 } else { e[e.len() - 1].t - e[0].t },
        avg_x,
        avg_y,
        std_x,
        std_y,
        n_moves: count(EventKind::Move),
        n_left: count(EventKind::LeftClick),
        n_right: count(EventKind::RightClick),
        n_scrolls: count(EventKind::Scroll),
        avg_speed: if active > 0.0 { path / active } else { 0.0 },
        idle_ratio: if gaps == 0 { 0.0 } else { idle as f64 / gaps as f64 },
    }
}

/// Per-pair count of training matchers whose final match contains the pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsensusTable {
    counts: BTreeMap<(usize, usize), u32>,
    train_size: usize,
}

impl ConsensusTable {
    pub fn count(&self, pair: (usize, usize)) -> u32 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    /// Count divided by the training population size.
    pub fn share(&self, pair: (usize, usize)) -> f64 {
        if self.train_size == 0 {
            0.0
        } else {
            f64::from(self.count(pair)) / self.train_size as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }
}

pub fn build_consensus<T>(train_matches: &[Match<T>], task: &TaskSpec) -> Result<ConsensusTable>
where
    T: crate::scalar::Scalar,
{
    if train_matches.is_empty() {
        return Err(Error::Config("consensus needs at least one training matcher".into()));
    }
    let mut counts = BTreeMap::new();
    for sigma in train_matches {
        for (i, j) in sigma.pairs() {
            if i >= task.n || j >= task.m {
                return Err(Error::MalformedSession(format!("pair ({}, {}) outside task", i + 1, j + 1)));
            }
            *counts.entry((i, j)).or_insert(0) += 1;
        }
    }
    Ok(ConsensusTable {
        counts,
        train_size: train_matches.len(),
    })
}

/// Serialized as `{train_size, entries: [[row, col, count], ...]}` with 0-based pairs.
#[derive(Serialize, Deserialize)]
struct ConsensusRepr {
    train_size: usize,
    entries: Vec<(usize, usize, u32)>,
}

impl Serialize for ConsensusTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConsensusRepr {
            train_size: self.train_size,
            entries: self.counts.iter().map(|(&(i, j), &c)| (i, j, c)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConsensusTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ConsensusRepr::deserialize(d)?;
        Ok(ConsensusTable {
            counts: repr.entries.into_iter().map(|(i, j, c)| ((i, j), c)).collect(),
            train_size: repr.train_size,
        })
    }
}
