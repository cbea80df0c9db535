mod common;

use common::*;
use mexi::behavior::{behavioral_features, build_consensus, mouse_features};
use mexi::expertise::{
    gamma_counts, labels_from_scores, nearest_rank, permutation_p_value, precision, recall, PermutationConfig,
};
use mexi::format::{parse_session, serialize_session};
use mexi::heatmap::{heatmaps_from_map, Bins};
use mexi::linalg::{max_weight_assignment, singular_values};
use mexi::predictors::lrsm_features;
use mexi::rng;
use mexi::session::{match_of, matrix_from_history, truncate_history, MatchEntry};
use mexi::synth::{generate_session, generate_task, Archetype, ArchetypeParams, SCREEN};
use mexi::{
    Decision, DecisionHistory, EventKind, FinalMatch, Matrix, MatcherSession, MouseEvent, MovementMap, ReferenceMatch,
    Scores, TaskSpec, Thresholds,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_map<R: Rng>(r: &mut R, len: usize, strictly_increasing: bool) -> MovementMap {
    let mut t = 0.0;
    let events = (0..len)
        .map(|_| {
            if strictly_increasing || r.random::<f64>() < 0.7 {
                t += r.random_range(0.01..4.0);
            }
            let kind = EventKind::ALL[r.random_range(0..4)];
            MouseEvent::new(r.random_range(0.0..=SCREEN.w), r.random_range(0.0..=SCREEN.h), kind, t)
        })
        .collect();
    MovementMap::new(events).unwrap()
}

fn session_of(history: DecisionHistory, movement: MovementMap, n: usize, m: usize) -> MatcherSession {
    let task = TaskSpec::new("p", n, m).unwrap();
    MatcherSession::new("x", task, SCREEN, history, movement, 0).unwrap()
}

fn random_matrix<R: Rng>(r: &mut R, n: usize, m: usize, density: f64) -> Vec<f64> {
    (0..n * m)
        .map(|_| if r.random::<f64>() < density { r.random_range(0.05..=1.0) } else { 0.0 })
        .collect()
}

fn matrix_of(values: &[f64], n: usize, m: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = values.chunks(m).map(<[f64]>::to_vec).collect();
    let _ = n;
    Matrix::from_rows(&rows).unwrap()
}

fn match_from(pairs: &[(usize, usize)]) -> FinalMatch {
    FinalMatch::new(pairs.iter().map(|&(row, col)| MatchEntry { row, col, confidence: 0.5 }).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matrix_equals_backward_scan(seed: u64, n in 1usize..7, m in 1usize..7, len in 0usize..40) {
        let h = random_history(&mut rng::rng(seed), n, m, len);
        let task = TaskSpec::new("p", n, m).unwrap();
        let got = matrix_from_history::<f64>(&h, &task).unwrap();
        let oracle = backward_scan(h.as_slice(), n, m);
        prop_assert_eq!(got.values(), oracle.as_slice());
    }

    #[test]
    fn stable_resort_leaves_matrix_unchanged(seed: u64, len in 0usize..30) {
        let h = random_history(&mut rng::rng(seed), 4, 5, len);
        let mut sorted = h.as_slice().to_vec();
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        let task = TaskSpec::new("p", 4, 5).unwrap();
        let a = matrix_from_history::<f64>(&h, &task).unwrap();
        let b = matrix_from_history::<f64>(&DecisionHistory::new(sorted).unwrap(), &task).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn last_write_wins(seed: u64, len in 0usize..30, i in 0usize..4, j in 0usize..5, c in 0.0f64..=1.0) {
        let h = random_history(&mut rng::rng(seed), 4, 5, len);
        let mut d = h.as_slice().to_vec();
        let t = d.last().map_or(1.0, |x| x.t + 0.5);
        d.push(Decision::new(i, j, c, t));
        let task = TaskSpec::new("p", 4, 5).unwrap();
        let mx = matrix_from_history::<f64>(&DecisionHistory::new(d).unwrap(), &task).unwrap();
        prop_assert_eq!(mx.get(i, j), c);
    }

    #[test]
    fn truncation_is_prefix_and_length(seed: u64, len in 0usize..30, k in 0usize..40, k2 in 0usize..40) {
        let mut r = rng::rng(seed);
        let h = random_history(&mut r, 4, 5, len);
        let s = session_of(h, random_map(&mut r, 60, false), 4, 5);
        prop_assert_eq!(&truncate_history(&s, s.history.len()), &s);
        let (lo, hi) = (k.min(k2), k.max(k2));
        let a = truncate_history(&s, lo);
        let b = truncate_history(&s, hi);
        prop_assert_eq!(a.history.len(), lo.min(len));
        prop_assert_eq!(b.history.len(), hi.min(len));
        prop_assert_eq!(a.history.as_slice(), &b.history.as_slice()[..a.history.len()]);
        prop_assert_eq!(a.movement.as_slice(), &b.movement.as_slice()[..a.movement.len()]);
    }

    #[test]
    fn heatmap_mass_equals_event_counts(seed: u64, len in 0usize..1200, bx in 1usize..70, by in 1usize..50) {
        let map = random_map(&mut rng::rng(seed), len, false);
        let h = heatmaps_from_map(&map, SCREEN, Bins { x: bx, y: by }).unwrap();
        for kind in EventKind::ALL {
            let count = map.as_slice().iter().filter(|e| e.kind == kind).count();
            prop_assert_eq!(h.mass(kind), count as f64);
            prop_assert!(h.grid(kind).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn match_size_equals_nonzero_count(seed: u64, n in 1usize..8, m in 1usize..8, density in 0.0f64..1.0) {
        let v = random_matrix(&mut rng::rng(seed), n, m, density);
        let sigma = match_of(&matrix_of(&v, n, m));
        prop_assert_eq!(sigma.len(), v.iter().filter(|&&x| x > 0.0).count());
    }

    #[test]
    fn gamma_counts_match_pair_enumeration(seed: u64, len in 0usize..13) {
        let g = random_graded(&mut rng::rng(seed), len);
        let got = gamma_counts(&g);
        prop_assert_eq!((got.concordant, got.discordant), gamma_pairs(&g));
    }

    #[test]
    fn negating_correctness_negates_gamma(seed: u64, len in 0usize..13) {
        let g = random_graded(&mut rng::rng(seed), len);
        let flipped: Vec<(f64, bool)> = g.iter().map(|&(c, ok)| (c, !ok)).collect();
        let a = gamma_counts(&g).gamma::<f64>();
        let b = gamma_counts(&flipped).gamma::<f64>();
        prop_assert_eq!(a.map(|x| -x), b);
    }

    #[test]
    fn exhaustive_p_matches_enumeration(seed: u64, len in 0usize..13) {
        let g = random_graded(&mut rng::rng(seed), len);
        let got = permutation_p_value(&g, &PermutationConfig::default());
        prop_assert_eq!(got, exhaustive_p(&g));
        if let Some(p) = got {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn precision_recall_follow_set_algebra(seed: u64, n in 1usize..6, m in 1usize..6) {
        let mut r = rng::rng(seed);
        let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
        let sigma_pairs: Vec<_> = cells.iter().copied().filter(|_| r.random::<bool>()).collect();
        let mut ref_pairs: Vec<_> = cells.iter().copied().filter(|_| r.random::<bool>()).collect();
        if ref_pairs.is_empty() {
            ref_pairs.push(cells[0]);
        }
        let reference = ReferenceMatch::new(ref_pairs.clone());
        let sigma = match_from(&sigma_pairs);
        let hits = sigma_pairs.iter().filter(|p| ref_pairs.contains(p)).count() as f64;
        let rc = recall(&sigma, &reference).unwrap();
        prop_assert_eq!(rc, hits / ref_pairs.len() as f64);
        if sigma_pairs.is_empty() {
            prop_assert!(precision(&sigma, &reference).is_err());
        } else {
            let pr = precision(&sigma, &reference).unwrap();
            prop_assert_eq!(pr, hits / sigma_pairs.len() as f64);
            prop_assert!((0.0..=1.0).contains(&pr) && (0.0..=1.0).contains(&rc));
        }
        for &extra in cells.iter().filter(|c| !sigma_pairs.contains(c)) {
            let mut grown = sigma_pairs.clone();
            grown.push(extra);
            let g = match_from(&grown);
            if ref_pairs.contains(&extra) {
                prop_assert!(recall(&g, &reference).unwrap() >= rc);
            } else if !sigma_pairs.is_empty() {
                prop_assert!(precision(&g, &reference).unwrap() <= precision(&sigma, &reference).unwrap());
            }
        }
    }

    #[test]
    fn nearest_rank_matches_sort_oracle(v in prop::collection::vec(-1.0f64..1.0, 1..60), pct in 0u32..=100) {
        prop_assert_eq!(nearest_rank(&v, pct), percentile_by_sort(&v, pct));
    }

    #[test]
    fn labels_are_monotone_in_each_score(p in 0.0f64..=1.0, r in 0.0f64..=1.0, res in -1.0f64..=1.0,
                                         pv in 0.0f64..=1.0, cal in -1.0f64..=1.0, bump in 0.0f64..0.5) {
        let th = Thresholds { delta_res: 0.3, delta_cal: 0.1, ..Thresholds::default() };
        let s = Scores { precision: p, recall: r, resolution: Some(res), resolution_p: Some(pv), calibration: cal };
        let base = labels_from_scores(&s, &th);
        let up = Scores {
            precision: (p + bump).min(1.0),
            recall: (r + bump).min(1.0),
            resolution: Some((res + bump).min(1.0)),
            resolution_p: Some((pv - bump).max(0.0)),
            calibration: cal.signum() * (cal.abs() - bump).max(0.0),
        };
        let better = labels_from_scores(&up, &th);
        for k in 0..4 {
            prop_assert!(!base.0[k] || better.0[k]);
        }
        prop_assert_eq!(base, labels_from_scores(&s, &th));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues(seed: u64, n in 1usize..7, m in 1usize..7) {
        let v = random_matrix(&mut rng::rng(seed), n, m, 0.7);
        let sv = singular_values(&v, n, m);
        let ev = gram_eigenvalues(&v, n, m);
        prop_assert!(sv.len() >= 2.min(n.min(m)));
        for (s, l) in sv.iter().zip(&ev) {
            prop_assert!((s * s - l.max(0.0)).abs() < 1e-9, "{} vs {}", s * s, l);
        }
    }

    #[test]
    fn assignment_matches_permutation_search(seed: u64, n in 1usize..7, m in 1usize..7) {
        let v = random_matrix(&mut rng::rng(seed), n, m, 0.6);
        let (w, assign) = max_weight_assignment(&v, n, m);
        prop_assert!((w - brute_assignment(&v, n, m)).abs() < 1e-12);
        let mut used = vec![false; m];
        let mut total = 0.0;
        for (i, a) in assign.iter().enumerate() {
            if let Some(j) = *a {
                prop_assert!(!used[j]);
                used[j] = true;
                total += v[i * m + j];
            }
        }
        prop_assert!((total - w).abs() < 1e-12);
    }

    #[test]
    fn predictors_ignore_row_and_column_order(seed: u64, n in 1usize..7, m in 1usize..7) {
        let mut r = rng::rng(seed);
        let v = random_matrix(&mut r, n, m, 0.6);
        let mut rp: Vec<usize> = (0..n).collect();
        let mut cp: Vec<usize> = (0..m).collect();
        rp.shuffle(&mut r);
        cp.shuffle(&mut r);
        let w: Vec<f64> = (0..n * m).map(|k| v[rp[k / m] * m + cp[k % m]]).collect();
        let a = lrsm_features(&matrix_of(&v, n, m)).to_vec();
        let b = lrsm_features(&matrix_of(&w, n, m)).to_vec();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn predictors_under_scaling(seed: u64, n in 1usize..7, m in 1usize..7, c in 0.05f64..=1.0) {
        let v = random_matrix(&mut rng::rng(seed), n, m, 0.6);
        let w: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = lrsm_features(&matrix_of(&v, n, m));
        let b = lrsm_features(&matrix_of(&w, n, m));
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        prop_assert_eq!(a.dominants, b.dominants);
        prop_assert_eq!(a.nonzero_ratio, b.nonzero_ratio);
        prop_assert!(close(a.sv1_ratio, b.sv1_ratio) && close(a.sv2_ratio, b.sv2_ratio));
        prop_assert!(close(a.bmm_mass_ratio, b.bmm_mass_ratio));
        for (x, y) in [(a.norm_1, b.norm_1), (a.norm_inf, b.norm_inf), (a.norm_frob, b.norm_frob),
                       (a.avg_conf_nonzero, b.avg_conf_nonzero), (a.max_conf, b.max_conf)] {
            prop_assert!(close(x * c, y), "{} * {} vs {}", x, c, y);
        }
        for f in [a.dominants, a.nonzero_ratio, a.sv1_ratio, a.sv2_ratio, a.bmm_mass_ratio] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn behavior_matches_streaming_oracle(seed: u64, len in 1usize..50) {
        let h = random_history(&mut rng::rng(seed), 5, 5, len);
        let b = behavioral_features(&h).unwrap();
        let o = behavior_oracle(h.as_slice());
        let got = [b.avg_conf, b.std_conf, b.avg_time_gap, b.std_time_gap, b.max_time_gap, b.total_duration,
                   b.n_distinct_pairs as f64, b.n_mind_changes as f64];
        for (x, y) in got.iter().zip(&o) {
            prop_assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", got, o);
        }
        prop_assert_eq!(b.n_mind_changes, b.n_decisions - b.n_distinct_pairs);
    }

    #[test]
    fn mouse_matches_recompute_oracle(seed: u64, len in 0usize..200, idle in 0.5f64..3.0) {
        let map = random_map(&mut rng::rng(seed), len, false);
        let f = mouse_features(&map, idle);
        let (path, _, ratio, speed) = mouse_oracle(map.as_slice(), idle);
        prop_assert!((f.total_path_length - path).abs() < 1e-9 * path.max(1.0));
        prop_assert!((f.avg_speed - speed).abs() < 1e-9 * speed.max(1.0));
        prop_assert_eq!(f.idle_ratio, ratio);
        prop_assert_eq!(f.n_moves + f.n_left + f.n_right + f.n_scrolls, len);
        prop_assert!((0.0..=1.0).contains(&f.idle_ratio));
    }

    #[test]
    fn features_ignore_storage_order(seed: u64, len in 1usize..40) {
        let mut r = rng::rng(seed);
        let h = random_history(&mut r, 5, 5, len);
        let map = random_map(&mut r, len * 3, true);
        let mut d = h.as_slice().to_vec();
        let mut e = map.as_slice().to_vec();
        d.shuffle(&mut r);
        e.shuffle(&mut r);
        d.sort_by(|a, b| a.t.total_cmp(&b.t));
        e.sort_by(|a, b| a.t.total_cmp(&b.t));
        let h2 = DecisionHistory::new(d).unwrap();
        let map2 = MovementMap::new(e).unwrap();
        prop_assert_eq!(behavioral_features(&h).unwrap(), behavioral_features(&h2).unwrap());
        prop_assert_eq!(mouse_features(&map, 2.0), mouse_features(&map2, 2.0));
    }

    #[test]
    fn consensus_matches_counting_oracle(seed: u64, pop in 1usize..12) {
        let mut r = rng::rng(seed);
        let task = TaskSpec::new("p", 4, 4).unwrap();
        let mut pairs: Vec<Vec<(usize, usize)>> = (0..pop)
            .map(|_| (0..16).map(|k| (k / 4, k % 4)).filter(|_| r.random::<f64>() < 0.3).collect())
            .collect();
        let matches: Vec<FinalMatch> = pairs.iter().map(|p| match_from(p)).collect();
        let table = build_consensus(&matches, &task).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(table.count((i, j)), consensus_oracle(&pairs, (i, j)));
                prop_assert!(table.count((i, j)) as usize <= table.train_size());
            }
        }
        pairs.shuffle(&mut r);
        let shuffled: Vec<FinalMatch> = pairs.iter().map(|p| match_from(p)).collect();
        prop_assert_eq!(build_consensus(&shuffled, &task).unwrap(), table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn synthetic_sessions_round_trip(seed: u64, arch in 0usize..4) {
        let (task, reference) = generate_task("rt", 12, 14, 10.0 / 168.0, seed).unwrap();
        let params = ArchetypeParams::default_for(Archetype::ALL[arch]);
        let s = generate_session(&task, &reference, &params, "m", seed ^ 1).unwrap();
        let bytes = serialize_session(&s);
        let back = parse_session(&bytes, &task).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_session(&back), bytes);
        let b = behavioral_features(&s.history).unwrap();
        prop_assert_eq!(b.n_mind_changes, b.n_decisions - b.n_distinct_pairs);
    }
}

#[test]
fn monte_carlo_p_within_binomial_interval() {
    let samples = 2000;
    let mut misses = 0;
    for i in 0..200u64 {
        let mut r = rng::child_rng(17, "mc", i);
        let len = r.random_range(6..13);
        let g = random_graded(&mut r, len);
        let Some(exact) = exhaustive_p(&g) else { continue };
        let cfg = PermutationConfig { exhaustive_limit: 0, samples, seed: i };
        let mc = permutation_p_value(&g, &cfg).unwrap();
        let (lo, hi) = wilson_99(mc, samples);
        if exact < lo - 1e-12 || exact > hi + 1e-12 {
            misses += 1;
        }
    }
    // a 99% interval misses about 1 in 100; 7 or more of 200 has probability below 0.5%
    assert!(misses <= 6, "{misses} of 200 outside the 99% interval");
}
