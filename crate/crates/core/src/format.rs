//! On-disk formats: session logs (JSON), task specs (JSON) and reference matches (CSV).
//!
//! Pair indices are 1-based in every file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{
    Decision, DecisionHistory, EventKind, MatcherSession, MouseEvent, MovementMap, ReferenceMatch, Screen,
    TaskSpec,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Break timestamp ties (and inversions) in input order by adding 1 ms steps.
    pub jitter_ties: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionLog {
    matcher_id: String,
    task_id: String,
    screen: Screen,
    warmup_count: usize,
    decisions: Vec<DecisionRecord>,
    movements: Vec<MovementRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionRecord {
    row: usize,
    col: usize,
    conf: f64,
    t: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MovementRecord {
    x: f64,
    y: f64,
    kind: String,
    t: f64,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string())
}

pub fn parse_session(bytes: &[u8], task: &TaskSpec) -> Result<MatcherSession> {
    parse_session_with(bytes, task, ParseOptions::default())
}

pub fn parse_session_with(bytes: &[u8], task: &TaskSpec, opts: ParseOptions) -> Result<MatcherSession> {
    let log: SessionLog = serde_json::from_slice(bytes).map_err(json_error)?;
    if log.task_id != task.task_id {
        return Err(Error::parse(
            "task_id",
            format!("session is for task {:?}, expected {:?}", log.task_id, task.task_id),
        ));
    }
    let screen = log.screen;
    if !(screen.w > 0.0 && screen.h > 0.0 && screen.w.is_finite() && screen.h.is_finite()) {
        return Err(Error::parse("screen", "width and height must be positive"));
    }

    let mut decisions = Vec::with_capacity(log.decisions.len());
    for (i, d) in log.decisions.iter().enumerate() {
        let at = |field: &str| format!("decisions[{i}].{field}");
        if d.row < 1 || d.row > task.n {
            return Err(Error::parse(at("row"), format!("row {} outside 1..={}", d.row, task.n)));
        }
        if d.col < 1 || d.col > task.m {
            return Err(Error::parse(at("col"), format!("col {} outside 1..={}", d.col, task.m)));
        }
        if !(0.0..=1.0).contains(&d.conf) {
            return Err(Error::parse(at("conf"), format!("confidence {} outside [0, 1]", d.conf)));
        }
        if !(d.t >= 0.0 && d.t.is_finite()) {
            return Err(Error::parse(at("t"), format!("timestamp {} must be a non-negative number", d.t)));
        }
        let mut t = d.t;
        if let Some(prev) = decisions.last().map(|p: &Decision| p.t) {
            if t <= prev {
                if opts.jitter_ties {
                    t = prev + 0.001;
                } else {
                    return Err(Error::parse(
                        at("t"),
                        format!("timestamp {t} does not strictly follow {prev}"),
                    ));
                }
            }
        }
        decisions.push(Decision::new(d.row - 1, d.col - 1, d.conf, t));
    }

    let mut events = Vec::with_capacity(log.movements.len());
    for (i, m) in log.movements.iter().enumerate() {
        let at = |field: &str| format!("movements[{i}].{field}");
        let kind = EventKind::from_code(&m.kind)
            .ok_or_else(|| Error::parse(at("kind"), format!("unknown event kind {:?}", m.kind)))?;
        if !screen.contains(m.x, m.y) {
            return Err(Error::parse(
                at("x"),
                format!("position ({}, {}) outside {}x{} screen", m.x, m.y, screen.w, screen.h),
            ));
        }
        if !(m.t >= 0.0 && m.t.is_finite()) {
            return Err(Error::parse(at("t"), format!("timestamp {} must be a non-negative number", m.t)));
        }
        if let Some(prev) = events.last().map(|p: &MouseEvent| p.t) {
            if m.t < prev {
                return Err(Error::parse(at("t"), format!("timestamp {} precedes {prev}", m.t)));
            }
        }
        events.push(MouseEvent::new(m.x, m.y, kind, m.t));
    }

    if log.warmup_count > decisions.len() {
        return Err(Error::parse(
            "warmup_count",
            format!("warmup_count {} exceeds {} decisions", log.warmup_count, decisions.len()),
        ));
    }

    MatcherSession::new(
        log.matcher_id,
        task.clone(),
        screen,
        DecisionHistory::new(decisions)?,
        MovementMap::new(events)?,
        log.warmup_count,
    )
}

/// Smallest task that admits every decision of a session log, for tools that
/// only need the log itself.
pub fn infer_task(bytes: &[u8]) -> Result<TaskSpec> {
    let log: SessionLog = serde_json::from_slice(bytes).map_err(json_error)?;
    let n = log.decisions.iter().map(|d| d.row).max().unwrap_or(1).max(1);
    let m = log.decisions.iter().map(|d| d.col).max().unwrap_or(1).max(1);
    TaskSpec::new(log.task_id, n, m)
}

/// Canonical session-log bytes (pretty JSON, trailing newline).
pub fn serialize_session(session: &MatcherSession) -> Vec<u8> {
    let log = SessionLog {
        matcher_id: session.matcher_id.clone(),
        task_id: session.task.task_id.clone(),
        screen: session.screen,
        warmup_count: session.warmup_count,
        decisions: session
            .history
            .iter()
            .map(|d| DecisionRecord {
                row: d.row + 1,
                col: d.col + 1,
                conf: d.confidence,
                t: d.t,
            })
            .collect(),
        movements: session
            .movement
            .as_slice()
            .iter()
            .map(|e| MovementRecord {
                x: e.x,
                y: e.y,
                kind: e.kind.code().to_string(),
                t: e.t,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&log).expect("session log serializes");
    out.push(b'\n');
    out
}

pub fn parse_task(bytes: &[u8]) -> Result<TaskSpec> {
    let task: TaskSpec = serde_json::from_slice(bytes).map_err(json_error)?;
    task.validate()?;
    Ok(task)
}

pub fn serialize_task(task: &TaskSpec) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(task).expect("task serializes");
    out.push(b'\n');
    out
}

/// Parses a `row,col` CSV with a header line.
pub fn parse_reference(text: &str, task: &TaskSpec) -> Result<ReferenceMatch> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "row,col" => {}
        Some((i, _)) => return Err(Error::parse(format!("line {}", i + 1), "expected header `row,col`")),
        None => return Err(Error::parse("line 1", "empty reference file")),
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        let loc = || format!("line {}", i + 1);
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(loc(), "expected two comma-separated fields"))?;
        let row: usize = a.trim().parse().map_err(|e| Error::parse(loc(), format!("row: {e}")))?;
        let col: usize = b.trim().parse().map_err(|e| Error::parse(loc(), format!("col: {e}")))?;
        if row < 1 || row > task.n || col < 1 || col > task.m {
            return Err(Error::parse(
                loc(),
                format!("pair ({row}, {col}) outside {}x{} task", task.n, task.m),
            ));
        }
        pairs.push((row - 1, col - 1));
    }
    Ok(ReferenceMatch::new(pairs))
}

pub fn serialize_reference(reference: &ReferenceMatch) -> String {
    let mut out = String::from("row,col\n");
    for (i, j) in reference.iter() {
        out.push_str(&format!("{},{}\n", i + 1, j + 1));
    }
    out
}
