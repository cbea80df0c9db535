use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use mexi::characterizer::{assess_or_none, fit_labels, labels_csv, CharacterizerModel};
use mexi::evaluation::{kfold_protocol, predictions_csv, Baseline, EvalConfig, EvalReport};
use mexi::format::{infer_task, parse_reference, parse_session_with, parse_task, ParseOptions, serialize_reference, serialize_session, serialize_task};
use mexi::heatmap::heatmaps_from_map;
use mexi::session::truncate_history;
use mexi::synth::{benchmark, BenchmarkSpec, Manifest};
use mexi::{EventKind, LabelVector, MatcherSession, ReferenceMatch, TaskSpec};

use crate::{
    CliError, EvaluateArgs, FeaturesArgs, GenerateArgs, HeatmapArgs, LabelArgs, PredictArgs, ReportArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable output");
    out.push(b'\n');
    write(path, &out)
}

/// Prefixes data errors with the file they came from.
fn at<T>(path: &Path, r: mexi::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_task(path: &Path) -> Result<TaskSpec> {
    at(path, parse_task(&read(path)?))
}

fn load_reference(path: &Path, task: &TaskSpec) -> Result<ReferenceMatch> {
    let text = String::from_utf8(read(path)?).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
    at(path, parse_reference(&text, task))
}

/// A single log file, or every `*.json` in a directory in name order.
fn session_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no session logs (*.json)", path.display())));
    }
    Ok(files)
}

fn load_sessions(path: &Path, task: &TaskSpec, opts: ParseOptions) -> Result<Vec<MatcherSession>> {
    session_files(path)?
        .iter()
        .map(|f| at(f, parse_session_with(&read(f)?, task, opts)))
        .collect()
}

fn signs(l: &LabelVector) -> String {
    l.0.iter().map(|&b| if b { "+1" } else { "-1" }).collect::<Vec<_>>().join(" ")
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = BenchmarkSpec {
        task_id: a.task_id.clone(),
        n: a.n,
        m: a.m,
        reference_pairs: a.reference_pairs,
        per_archetype: a.per_archetype,
    };
    if spec.per_archetype == 0 {
        return Err(CliError::Usage("--per-archetype must be >= 1".into()));
    }
    let (task, reference, population) = benchmark(&spec, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    write(&a.out.join("task.json"), &serialize_task(&task))?;
    write(&a.out.join("reference.csv"), serialize_reference(&reference).as_bytes())?;
    for g in &population {
        write(
            &a.out.join("sessions").join(format!("{}.json", g.session.matcher_id)),
            &serialize_session(&g.session),
        )?;
    }
    let manifest = Manifest::of(a.seed, &task, &population);
    write_json(
        &a.out.join("manifest.json"),
        &json!({ "generator": spec, "seed": a.seed, "task_id": manifest.task_id, "matchers": manifest.matchers }),
    )?;
    println!("wrote {} sessions to {}", population.len(), a.out.display());
    Ok(())
}

pub fn label(a: &LabelArgs, opts: ParseOptions) -> Result<()> {
    let task = load_task(&a.data.task)?;
    let reference = load_reference(&a.data.reference, &task)?;
    let sessions = load_sessions(&a.data.sessions, &task, opts)?;
    let perm = a.thresholds.permutation();
    let scores = sessions
        .iter()
        .map(|s| assess_or_none(s, &reference, &perm))
        .collect::<mexi::Result<Vec<_>>>()?;
    let (thresholds, labels) = fit_labels(&scores, a.thresholds.thresholds()?)?;
    let rows: Vec<_> = sessions
        .iter()
        .zip(&scores)
        .zip(&labels)
        .map(|((s, sc), l)| json!({ "matcher_id": s.matcher_id, "scores": sc, "labels": signs(l) }))
        .collect();
    write_json(
        &a.out,
        &json!({ "permutation": perm, "thresholds": thresholds, "matchers": rows }),
    )?;
    if let Some(path) = &a.csv {
        let ids: Vec<&str> = sessions.iter().map(|s| s.matcher_id.as_str()).collect();
        write(path, &labels_csv(&ids, &scores, &labels))?;
    }
    println!("labelled {} sessions", sessions.len());
    Ok(())
}

fn load_model(path: &Path) -> Result<CharacterizerModel> {
    at(path, CharacterizerModel::from_json(&read(path)?))
}

pub fn features(a: &FeaturesArgs, opts: ParseOptions) -> Result<()> {
    let model = load_model(&a.model)?;
    let task = load_task(&a.task)?;
    let sessions = load_sessions(&a.sessions, &task, opts)?;
    let rows = sessions
        .iter()
        .map(|s| Ok(json!({ "matcher_id": s.matcher_id, "values": model.extract_features(s)?.values })))
        .collect::<mexi::Result<Vec<_>>>()?;
    write_json(
        &a.out,
        &json!({ "model_config": model.config, "schema": model.schema, "matchers": rows }),
    )?;
    Ok(())
}

pub fn train(a: &TrainArgs, opts: ParseOptions) -> Result<()> {
    let cfg = a.model.characterizer(a.seed)?;
    let task = load_task(&a.data.task)?;
    let reference = load_reference(&a.data.reference, &task)?;
    let sessions = load_sessions(&a.data.sessions, &task, opts)?;
    let data: Vec<_> = sessions.iter().map(|s| (s, &reference)).collect();
    let model = CharacterizerModel::train(&data, &cfg)?;
    write(&a.out, &model.to_json())?;
    let families: Vec<&str> = model.classifiers.iter().map(|c| c.model.family()).collect();
    println!(
        "trained {} on {} sessions + {} sub-matchers; classifiers {:?}",
        cfg.plan.variant_name, model.train_sessions, model.sub_matchers, families
    );
    Ok(())
}

pub fn predict(a: &PredictArgs, opts: ParseOptions) -> Result<()> {
    let model = load_model(&a.model)?;
    let task = load_task(&a.task)?;
    let sessions = load_sessions(&a.sessions, &task, opts)?;
    let mut rows = Vec::new();
    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    for s in &sessions {
        let view = match a.early {
            Some(k) => truncate_history(s, k),
            None => s.clone(),
        };
        let p = model.predict(&view)?;
        let _ = writeln!(o, "{}\t{}", s.matcher_id, signs(&p.labels));
        rows.push(json!({
            "matcher_id": s.matcher_id,
            "labels": signs(&p.labels),
            "probabilities": p.probabilities,
        }));
    }
    write_json(
        &a.out,
        &json!({ "model_config": model.config, "early": a.early, "matchers": rows }),
    )
}

pub fn evaluate(a: &EvaluateArgs, opts: ParseOptions) -> Result<()> {
    let characterizer = a.model.characterizer(a.seed)?;
    let baselines = a
        .baselines
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Baseline>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let (sessions, refs) = match (&a.task, &a.reference, &a.sessions) {
        (Some(t), Some(r), Some(s)) => {
            let task = load_task(t)?;
            let reference = load_reference(r, &task)?;
            let sessions = load_sessions(s, &task, opts)?;
            let refs = vec![reference; sessions.len()];
            (sessions, refs)
        }
        _ => {
            if a.per_archetype == 0 {
                return Err(CliError::Usage("--per-archetype must be >= 1".into()));
            }
            let spec = BenchmarkSpec {
                per_archetype: a.per_archetype,
                ..BenchmarkSpec::default()
            };
            let (_, reference, population) = benchmark(&spec, a.seed)?;
            let sessions: Vec<_> = population.into_iter().map(|g| g.session).collect();
            let refs = vec![reference; sessions.len()];
            (sessions, refs)
        }
    };
    let cfg = EvalConfig {
        k: a.k,
        characterizer,
        baselines,
        bootstrap_samples: a.bootstrap,
        seed: a.seed,
    };
    let out = kfold_protocol(&sessions, &refs, &cfg)?;
    write(&a.out.join("report.json"), &out.report.to_json())?;
    write(&a.out.join("accuracy.csv"), &out.report.accuracy_csv())?;
    write(&a.out.join("utilization.csv"), &out.report.utilization_csv())?;
    write(&a.out.join("predictions.csv"), &predictions_csv(&out.predictions))?;
    print_report(&out.report);
    Ok(())
}

fn kind_stem(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Move => "move",
        EventKind::LeftClick => "left_click",
        EventKind::RightClick => "right_click",
        EventKind::Scroll => "scroll",
    }
}

/// Binary graymap whose maxval is the grid maximum, so pixels are raw counts.
fn pgm(grid: &[f64], cols: usize, rows: usize) -> Result<Vec<u8>> {
    let max = grid.iter().copied().fold(0.0, f64::max) as u64;
    if max > u64::from(u16::MAX) {
        return Err(CliError::Data(format!("cell count {max} does not fit a 16-bit graymap")));
    }
    let maxval = max.max(1);
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    for &v in grid {
        let v = v as u16;
        if maxval < 256 {
            out.push(v as u8);
        } else {
            out.extend(v.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn heatmap(a: &HeatmapArgs, opts: ParseOptions) -> Result<()> {
    let bytes = read(&a.session)?;
    let task = match &a.task {
        Some(t) => load_task(t)?,
        None => at(&a.session, infer_task(&bytes))?,
    };
    let session = at(&a.session, parse_session_with(&bytes, &task, opts))?;
    let maps = heatmaps_from_map(&session.movement, session.screen, a.bins)?;
    let mut counts = serde_json::Map::new();
    for kind in EventKind::ALL {
        let grid = maps.grid(kind);
        let stem = kind_stem(kind);
        write(&a.out.join(format!("{stem}.pgm")), &pgm(grid, a.bins.x, a.bins.y)?)?;
        let mut csv = String::new();
        for row in grid.chunks(a.bins.x) {
            let cells: Vec<String> = row.iter().map(|v| format!("{}", *v as u64)).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
        write(&a.out.join(format!("{stem}.csv")), csv.as_bytes())?;
        counts.insert(stem.into(), json!(maps.mass(kind) as u64));
    }
    write_json(
        &a.out.join("heatmap.json"),
        &json!({ "session": session.matcher_id, "bins": a.bins.to_string(), "screen": session.screen, "counts": counts }),
    )?;
    println!("{}", serde_json::Value::Object(counts));
    Ok(())
}

fn print_report(r: &EvalReport) {
    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(
        o,
        "{} sessions, {} folds, variant {}, seed {}",
        r.sessions, r.config.k, r.variant, r.config.seed
    );
    let _ = writeln!(o, "\n{:<14} {:>7} {:>7} {:>7} {:>7} {:>7}", "method", "A_P", "A_R", "A_Res", "A_Cal", "A_ML");
    for m in &r.accuracy {
        let _ = writeln!(
            o,
            "{:<14} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            m.method, m.mean[0], m.mean[1], m.mean[2], m.mean[3], m.mean[4]
        );
    }
    let _ = writeln!(o, "\nbootstrap p (MExI > baseline, A_ML)");
    for c in r.comparisons.iter().filter(|c| c.metric == mexi::evaluation::Metric::Multilabel) {
        let _ = writeln!(o, "  vs {:<12} {:.4}", c.against, c.p_value);
    }
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    let _ = writeln!(o, "\n{:<14} {:>8} {:>7} {:>7} {:>7} {:>7}", "selection", "selected", "P", "R", "Res", "|Cal|");
    for u in &r.utilization {
        let _ = writeln!(
            o,
            "{:<14} {:>8} {:>7} {:>7} {:>7} {:>7}",
            u.selection,
            u.selected,
            cell(u.mean_precision),
            cell(u.mean_recall),
            cell(u.mean_resolution),
            cell(u.mean_abs_calibration)
        );
    }
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let r: EvalReport = serde_json::from_slice(&read(&a.report)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.report.display())))?;
    print_report(&r);
    Ok(())
}
