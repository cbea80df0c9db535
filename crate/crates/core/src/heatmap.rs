//! Per-kind spatial aggregation of a movement map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{EventKind, MovementMap, Screen};

pub const DEFAULT_BINS: Bins = Bins { x: 64, y: 48 };

/// Heat-map resolution: `x` columns by `y` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bins {
    pub x: usize,
    pub y: usize,
}

impl Bins {
    pub fn cells(&self) -> usize {
        self.x * self.y
    }
}

impl std::fmt::Display for Bins {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.x, self.y)
    }
}

impl std::str::FromStr for Bins {
    type Err = String;

    /// Parses `64x48`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected COLSxROWS, got {s:?}"))?;
        let x = a.trim().parse().map_err(|e| format!("bad bin count {a:?}: {e}"))?;
        let y = b.trim().parse().map_err(|e| format!("bad bin count {b:?}: {e}"))?;
        if x == 0 || y == 0 {
            return Err("bin counts must be >= 1".into());
        }
        Ok(Bins { x, y })
    }
}

/// One count grid per [`EventKind`], row-major with `bins.y` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapSet {
    pub bins: Bins,
    grids: [Vec<f64>; 4],
}

impl HeatMapSet {
    pub fn grid(&self, kind: EventKind) -> &[f64] {
        &self.grids[kind.index()]
    }

    pub fn cell(&self, kind: EventKind, col: usize, row: usize) -> f64 {
        self.grids[kind.index()][row * self.bins.x + col]
    }

    pub fn mass(&self, kind: EventKind) -> f64 {
        self.grid(kind).iter().sum()
    }
}

/// Bins every event of `map` into its kind's grid.
pub fn heatmaps_from_map(map: &MovementMap, screen: Screen, bins: Bins) -> Result<HeatMapSet> {
    if bins.x == 0 || bins.y == 0 {
        return Err(Error::Config("heat-map bins must be >= 1".into()));
    }
    let mut grids: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; bins.cells()]);
    for (i, e) in map.as_slice().iter().enumerate() {
        if !screen.contains(e.x, e.y) {
            return Err(Error::MalformedSession(format!(
                "movement {i}: ({}, {}) outside {}x{} screen",
                e.x, e.y, screen.w, screen.h
            )));
        }
        let cx = ((e.x / screen.w * bins.x as f64).floor() as usize).min(bins.x - 1);
        let cy = ((e.y / screen.h * bins.y as f64).floor() as usize).min(bins.y - 1);
        grids[e.kind.index()][cy * bins.x + cx] += 1.0;
    }
    Ok(HeatMapSet { bins, grids })
}
