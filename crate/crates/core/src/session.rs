//! Matching tasks, recorded sessions and the derivations computed from them.
//!
//! Indices are 0-based everywhere in memory. The file formats in [`crate::format`]
//! shift them to 1-based.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    /// Number of source elements (matrix rows).
    pub n: usize,
    /// Number of target elements (matrix columns).
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<Vec<String>>,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, n: usize, m: usize) -> Result<Self> {
        let task = TaskSpec {
            task_id: task_id.into(),
            n,
            m,
            rows: None,
            cols: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config(format!(
                "task {} must have n >= 1 and m >= 1 (got {}x{})",
                self.task_id, self.n, self.m
            )));
        }
        if let Some(rows) = &self.rows {
            if rows.len() != self.n {
                return Err(Error::Config(format!("{} row labels for n = {}", rows.len(), self.n)));
            }
        }
        if let Some(cols) = &self.cols {
            if cols.len() != self.m {
                return Err(Error::Config(format!("{} column labels for m = {}", cols.len(), self.m)));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n * self.m
    }
}

/// One recorded matching decision on the pair `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub row: usize,
    pub col: usize,
    pub confidence: f64,
    /// Seconds since session start.
    pub t: f64,
}

impl Decision {
    pub fn new(row: usize, col: usize, confidence: f64, t: f64) -> Self {
        Decision { row, col, confidence, t }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.row, self.col)
    }
}

/// Decisions ordered by strictly increasing timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionHistory {
    decisions: Vec<Decision>,
}

impl DecisionHistory {
    pub fn new(decisions: Vec<Decision>) -> Result<Self> {
        for (i, d) in decisions.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::MalformedSession(format!(
                    "decision {i}: confidence {} outside [0, 1]",
                    d.confidence
                )));
            }
            if !(d.t >= 0.0) || !d.t.is_finite() {
                return Err(Error::MalformedSession(format!("decision {i}: negative timestamp {}", d.t)));
            }
            if i > 0 && d.t <= decisions[i - 1].t {
                return Err(Error::MalformedSession(format!(
                    "decision {i}: timestamp {} does not follow {}",
                    d.t,
                    decisions[i - 1].t
                )));
            }
        }
        Ok(DecisionHistory { decisions })
    }

    pub fn as_slice(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Decision> {
        self.decisions.iter()
    }

    /// Contiguous sub-history `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> DecisionHistory {
        DecisionHistory {
            decisions: self.decisions[start..start + len].to_vec(),
        }
    }

    pub fn mean_confidence(&self) -> Option<f64> {
        if self.decisions.is_empty() {
            None
        } else {
            Some(self.decisions.iter().map(|d| d.confidence).sum::<f64>() / self.decisions.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Move,
    LeftClick,
    RightClick,
    Scroll,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::Move,
        EventKind::LeftClick,
        EventKind::RightClick,
        EventKind::Scroll,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Tag used in the session-log format.
    pub fn code(self) -> &'static str {
        match self {
            EventKind::Move => "move",
            EventKind::LeftClick => "l",
            EventKind::RightClick => "r",
            EventKind::Scroll => "s",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MouseEvent {
    pub x: f64,
    pub y: f64,
    pub kind: EventKind,
    pub t: f64,
}

impl MouseEvent {
    pub fn new(x: f64, y: f64, kind: EventKind, t: f64) -> Self {
        MouseEvent { x, y, kind, t }
    }
}

/// Mouse events ordered by non-decreasing timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MovementMap {
    events: Vec<MouseEvent>,
}

impl MovementMap {
    pub fn new(events: Vec<MouseEvent>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.t >= 0.0) || !e.t.is_finite() {
                return Err(Error::MalformedSession(format!("movement {i}: bad timestamp {}", e.t)));
            }
            if i > 0 && e.t < events[i - 1].t {
                return Err(Error::MalformedSession(format!(
                    "movement {i}: timestamp {} precedes {}",
                    e.t,
                    events[i - 1].t
                )));
            }
        }
        Ok(MovementMap { events })
    }

    pub fn as_slice(&self) -> &[MouseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `from <= t <= to`.
    pub fn between(&self, from: f64, to: f64) -> MovementMap {
        MovementMap {
            events: self.events.iter().filter(|e| e.t >= from && e.t <= to).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub w: f64,
    pub h: f64,
}

impl Screen {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.w && y <= self.h
    }
}

/// One matcher's record `(history, movement)` with its task and screen.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherSession {
    pub matcher_id: String,
    pub task: TaskSpec,
    pub screen: Screen,
    pub history: DecisionHistory,
    pub movement: MovementMap,
    /// Leading decisions that form the warmup block.
    pub warmup_count: usize,
    /// Set on augmentation windows; such sessions may only be used for training.
    pub training_only: bool,
}

impl MatcherSession {
    pub fn new(
        matcher_id: impl Into<String>,
        task: TaskSpec,
        screen: Screen,
        history: DecisionHistory,
        movement: MovementMap,
        warmup_count: usize,
    ) -> Result<Self> {
        let session = MatcherSession {
            matcher_id: matcher_id.into(),
            task,
            screen,
            history,
            movement,
            warmup_count,
            training_only: false,
        };
        session.validate()?;
        Ok(session)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if !(self.screen.w > 0.0 && self.screen.h > 0.0) {
            return Err(Error::MalformedSession("screen dimensions must be positive".into()));
        }
        for (i, d) in self.history.iter().enumerate() {
            if d.row >= self.task.n || d.col >= self.task.m {
                return Err(Error::MalformedSession(format!(
                    "decision {i}: pair ({}, {}) outside {}x{} task",
                    d.row + 1,
                    d.col + 1,
                    self.task.n,
                    self.task.m
                )));
            }
        }
        for (i, e) in self.movement.as_slice().iter().enumerate() {
            if !self.screen.contains(e.x, e.y) {
                return Err(Error::MalformedSession(format!(
                    "movement {i}: ({}, {}) outside {}x{} screen",
                    e.x, e.y, self.screen.w, self.screen.h
                )));
            }
        }
        if self.warmup_count > self.history.len() {
            return Err(Error::MalformedSession(format!(
                "warmup_count {} exceeds {} decisions",
                self.warmup_count,
                self.history.len()
            )));
        }
        Ok(())
    }

    /// The warmup block as its own history.
    pub fn warmup(&self) -> DecisionHistory {
        self.history.window(0, self.warmup_count)
    }
}

/// Dense `n x m` grid of alignment confidences in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingMatrix<T> {
    n: usize,
    m: usize,
    values: Vec<T>,
}

impl<T: Scalar> MatchingMatrix<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        MatchingMatrix { n, m, values: vec![T::zero(); n * m] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Config("matrix rows must be non-empty and equally long".into()));
        }
        let values: Vec<T> = rows.iter().flatten().copied().collect();
        if values.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Config("matrix entries must lie in [0, 1]".into()));
        }
        Ok(MatchingMatrix { n, m, values })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.m + j] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEntry<T> {
    pub row: usize,
    pub col: usize,
    pub confidence: T,
}

/// Non-zero support of a matching matrix, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Match<T> {
    entries: Vec<MatchEntry<T>>,
}

impl<T: Scalar> Match<T> {
    /// Builds a match from raw entries; rejects duplicate pairs and non-positive confidences.
    pub fn new(mut entries: Vec<MatchEntry<T>>) -> Result<Self> {
        entries.sort_by_key(|e| (e.row, e.col));
        for w in entries.windows(2) {
            if (w[0].row, w[0].col) == (w[1].row, w[1].col) {
                return Err(Error::Config(format!("duplicate match entry ({}, {})", w[0].row, w[0].col)));
            }
        }
        if entries.iter().any(|e| !(e.confidence > T::zero())) {
            return Err(Error::Config("match confidences must be positive".into()));
        }
        Ok(Match { entries })
    }

    pub fn entries(&self) -> &[MatchEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|e| (e.row, e.col))
    }
}

/// Binary ground truth: the set of correct pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceMatch {
    positives: BTreeSet<(usize, usize)>,
}

impl ReferenceMatch {
    pub fn new(positives: impl IntoIterator<Item = (usize, usize)>) -> Self {
        ReferenceMatch {
            positives: positives.into_iter().collect(),
        }
    }

    /// Checks every pair against the task dimensions.
    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        match self.positives.iter().find(|&&(i, j)| i >= task.n || j >= task.m) {
            Some(&(i, j)) => Err(Error::Config(format!(
                "reference pair ({}, {}) outside {}x{} task",
                i + 1,
                j + 1,
                task.n,
                task.m
            ))),
            None => Ok(()),
        }
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.positives.contains(&pair)
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positives.iter().copied()
    }
}

/// Builds the matrix by keeping, per cell, the confidence of the latest decision on it.
pub fn matrix_from_history<T: Scalar>(history: &DecisionHistory, task: &TaskSpec) -> Result<MatchingMatrix<T>> {
    let mut matrix = MatchingMatrix::zeros(task.n, task.m);
    // history is strictly time-ordered, so a forward overwrite leaves the latest value
    for (i, d) in history.iter().enumerate() {
        if d.row >= task.n || d.col >= task.m {
            return Err(Error::MalformedSession(format!(
                "decision {i}: pair ({}, {}) outside {}x{} task",
                d.row + 1,
                d.col + 1,
                task.n,
                task.m
            )));
        }
        matrix.set(d.row, d.col, T::of(d.confidence));
    }
    Ok(matrix)
}

/// All strictly positive entries of `matrix`.
pub fn match_of<T: Scalar>(matrix: &MatchingMatrix<T>) -> Match<T> {
    let mut entries = Vec::new();
    for i in 0..matrix.rows() {
        for (j, &v) in matrix.row(i).iter().enumerate() {
            if v > T::zero() {
                entries.push(MatchEntry { row: i, col: j, confidence: v });
            }
        }
    }
    Match { entries }
}

/// Final match of a session.
pub fn final_match<T: Scalar>(session: &MatcherSession) -> Result<Match<T>> {
    Ok(match_of(&matrix_from_history::<T>(&session.history, &session.task)?))
}

/// Keeps the first `k` decisions and the mouse events up to the last kept decision.
pub fn truncate_history(session: &MatcherSession, k: usize) -> MatcherSession {
    if k >= session.history.len() {
        return session.clone();
    }
    let history = session.history.window(0, k);
    let movement = match history.as_slice().last() {
        Some(last) => MovementMap {
            events: session.movement.as_slice().iter().filter(|e| e.t <= last.t).copied().collect(),
        },
        None => MovementMap::default(),
    };
    MatcherSession {
        history,
        movement,
        warmup_count: session.warmup_count.min(k),
        ..session.clone()
    }
}
