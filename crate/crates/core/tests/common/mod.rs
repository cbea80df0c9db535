//! Brute-force oracles shared by the property suite and the acceptance target.
#![allow(dead_code)]

use mexi::{Decision, DecisionHistory};
use rand::Rng;

/// Matrix cell = confidence of the last decision on it, found by scanning backward.
pub fn backward_scan(history: &[Decision], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            if let Some(d) = history.iter().rev().find(|d| d.row == i && d.col == j) {
                out[i * m + j] = d.confidence;
            }
        }
    }
    out
}

/// Concordant and discordant counts over every (correct, incorrect) pair.
pub fn gamma_pairs(graded: &[(f64, bool)]) -> (u64, u64) {
    let (mut c, mut d) = (0, 0);
    for a in graded.iter().filter(|g| g.1) {
        for b in graded.iter().filter(|g| !g.1) {
            if a.0 > b.0 {
                c += 1;
            } else if a.0 < b.0 {
                d += 1;
            }
        }
    }
    (c, d)
}

pub fn gamma_of(c: u64, d: u64) -> Option<f64> {
    (c + d > 0).then(|| (c as f64 - d as f64) / (c + d) as f64)
}

/// Share of all correctness reassignments (same number correct) whose gamma is
/// defined and at least the observed one; compared exactly as fractions.
pub fn exhaustive_p(graded: &[(f64, bool)]) -> Option<f64> {
    let (oc, od) = gamma_pairs(graded);
    gamma_of(oc, od)?;
    let k = graded.len();
    let correct = graded.iter().filter(|g| g.1).count();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize != correct {
            continue;
        }
        total += 1;
        let relabelled: Vec<(f64, bool)> = (0..k).map(|i| (graded[i].0, mask >> i & 1 == 1)).collect();
        let (c, d) = gamma_pairs(&relabelled);
        if c + d > 0 {
            let lhs = (c as i128 - d as i128) * (oc + od) as i128;
            let rhs = (oc as i128 - od as i128) * (c + d) as i128;
            if lhs >= rhs {
                hits += 1;
            }
        }
    }
    Some(hits as f64 / total as f64)
}

/// Smallest sorted element whose 1-based rank `r` satisfies `100 r >= pct N`.
pub fn percentile_by_sort(values: &[f64], pct: u32) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (1..=n).find(|&r| 100 * r >= pct as usize * n).map(|r| v[r - 1]).or(v.first().copied())
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..200 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Eigenvalues of `MᵀM` (or `MMᵀ` for wide matrices), descending.
pub fn gram_eigenvalues(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (r, c) = (rows, cols);
    let at = |i: usize, j: usize| values[i * c + j];
    let k = r.min(c);
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if c <= r {
                        (0..r).map(|i| at(i, a) * at(i, b)).sum()
                    } else {
                        (0..c).map(|j| at(a, j) * at(b, j)).sum()
                    }
                })
                .collect()
        })
        .collect();
    symmetric_eigenvalues(gram)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best one-to-one assignment weight by trying every permutation of the padded square.
pub fn brute_assignment(values: &[f64], rows: usize, cols: usize) -> f64 {
    let s = rows.max(cols);
    let w = |i: usize, j: usize| if i < rows && j < cols { values[i * cols + j] } else { 0.0 };
    permutations(s)
        .iter()
        .map(|p| (0..s).map(|i| w(i, p[i])).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Random history on an `n x m` task with frequent revisits.
pub fn random_history<R: Rng>(r: &mut R, n: usize, m: usize, len: usize) -> DecisionHistory {
    let mut t = 0.0;
    let decisions = (0..len)
        .map(|_| {
            t += r.random_range(0.1..5.0);
            let conf = if r.random::<f64>() < 0.1 { 0.0 } else { (r.random_range(1..=20) as f64) / 20.0 };
            Decision::new(r.random_range(0..n), r.random_range(0..m), conf, t)
        })
        .collect();
    DecisionHistory::new(decisions).expect("increasing timestamps")
}

/// Confidences drawn from a coarse grid so ties are common.
pub fn random_graded<R: Rng>(r: &mut R, len: usize) -> Vec<(f64, bool)> {
    (0..len)
        .map(|_| (r.random_range(1..=8) as f64 / 8.0, r.random::<bool>()))
        .collect()
}

/// Two-sided 99% Wilson interval for a binomial proportion.
pub fn wilson_99(p_hat: f64, n: usize) -> (f64, f64) {
    let z = 2.5758293035489;
    let n = n as f64;
    let denom = 1.0 + z * z / n;
    let centre = (p_hat + z * z / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

fn pop_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// `[avg_conf, std_conf, avg_gap, std_gap, max_gap, duration, distinct, mind_changes]`
/// by explicit loops.
pub fn behavior_oracle(history: &[Decision]) -> [f64; 8] {
    let conf: Vec<f64> = history.iter().map(|d| d.confidence).collect();
    let mut gaps = Vec::new();
    for i in 1..history.len() {
        gaps.push(history[i].t - history[i - 1].t);
    }
    let mut seen: Vec<(usize, usize)> = Vec::new();
    let mut changes = 0;
    for d in history {
        if seen.contains(&(d.row, d.col)) {
            changes += 1;
        } else {
            seen.push((d.row, d.col));
        }
    }
    let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    [
        avg(&conf),
        pop_std(&conf),
        avg(&gaps),
        pop_std(&gaps),
        gaps.iter().fold(0.0, |a: f64, &b| a.max(b)),
        history.last().unwrap().t - history[0].t,
        seen.len() as f64,
        changes as f64,
    ]
}

/// `(path_length, active_time, idle_ratio, avg_speed)` for a movement slice.
pub fn mouse_oracle(events: &[mexi::MouseEvent], idle_threshold: f64) -> (f64, f64, f64, f64) {
    let mut path = 0.0;
    let mut active = 0.0;
    let mut idle = 0;
    for i in 1..events.len() {
        let (a, b) = (events[i - 1], events[i]);
        path += ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        if b.t - a.t > idle_threshold {
            idle += 1;
        } else {
            active += b.t - a.t;
        }
    }
    let gaps = events.len().saturating_sub(1);
    let ratio = if gaps == 0 { 0.0 } else { idle as f64 / gaps as f64 };
    let speed = if active > 0.0 { path / active } else { 0.0 };
    (path, active, ratio, speed)
}

/// Number of matches in `matches` whose positive cells include `(i, j)`.
pub fn consensus_oracle(matches: &[Vec<(usize, usize)>], pair: (usize, usize)) -> u32 {
    matches.iter().filter(|m| m.contains(&pair)).count() as u32
}
