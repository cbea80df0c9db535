use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mexi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mexi")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mexi(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn generate(dir: &Path, per: usize) {
    ok(&["generate", "--out", dir.to_str().unwrap(), "--seed", "3", "--per-archetype", &per.to_string()]);
}

/// Pixel values of a binary graymap.
fn pgm_pixels(bytes: &[u8]) -> Vec<u64> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    pos += 1;
    assert_eq!(fields[0], "P5");
    let (w, h, maxval): (usize, usize, u64) =
        (fields[1].parse().unwrap(), fields[2].parse().unwrap(), fields[3].parse().unwrap());
    let data = &bytes[pos..];
    if maxval < 256 {
        assert_eq!(data.len(), w * h);
        data.iter().map(|&b| u64::from(b)).collect()
    } else {
        assert_eq!(data.len(), 2 * w * h);
        data.chunks(2).map(|c| u64::from(u16::from_be_bytes([c[0], c[1]]))).collect()
    }
}

#[test]
fn heatmap_pixels_sum_to_event_counts() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 1);
    for id in ["m001", "m002", "m003", "m004"] {
        let session = dir.path().join("sessions").join(format!("{id}.json"));
        let out = dir.path().join(format!("heat-{id}"));
        ok(&["heatmap", "--session", session.to_str().unwrap(), "--bins", "32x20", "--out", out.to_str().unwrap()]);
        let log: serde_json::Value = serde_json::from_slice(&fs::read(&session).unwrap()).unwrap();
        let events = log["movements"].as_array().unwrap();
        for (stem, code) in [("move", "move"), ("left_click", "l"), ("right_click", "r"), ("scroll", "s")] {
            let want = events.iter().filter(|e| e["kind"] == code).count() as u64;
            let pixels = pgm_pixels(&fs::read(out.join(format!("{stem}.pgm"))).unwrap());
            assert_eq!(pixels.len(), 32 * 20);
            assert_eq!(pixels.iter().sum::<u64>(), want, "{id} {stem}");
            let csv = fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap();
            let total: u64 = csv.split([',', '\n']).filter(|c| !c.is_empty()).map(|c| c.parse::<u64>().unwrap()).sum();
            assert_eq!(total, want);
        }
    }
}

#[test]
fn missing_reference_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 1);
    let missing = dir.path().join("nope.csv");
    let out = mexi(&[
        "label",
        "--task",
        dir.path().join("task.json").to_str().unwrap(),
        "--reference",
        missing.to_str().unwrap(),
        "--sessions",
        dir.path().join("sessions").to_str().unwrap(),
        "--out",
        dir.path().join("labels.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(missing.to_str().unwrap()));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mexi(&["generate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(mexi(&["--help"]).status.code(), Some(0));
}

#[test]
fn label_writes_measure_csv() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 2);
    let csv = dir.path().join("labels.csv");
    ok(&[
        "label",
        "--task",
        dir.path().join("task.json").to_str().unwrap(),
        "--reference",
        dir.path().join("reference.csv").to_str().unwrap(),
        "--sessions",
        dir.path().join("sessions").to_str().unwrap(),
        "--out",
        dir.path().join("labels.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("matcher_id,P,R,Res,Res_p,Cal,precise,thorough,correlated,calibrated")
    );
    assert_eq!(lines.count(), 8);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mexi.conf");
    fs::write(&cfg, "# defaults\nseed = 5\nper_archetype = 2\n").unwrap();
    let out = dir.path().join("data");
    ok(&["generate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["matchers"].as_array().unwrap().len(), 8);
}

#[test]
fn evaluate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "evaluate",
            "--seed",
            "4",
            "--per-archetype",
            "4",
            "--k",
            "2",
            "--variant",
            "mexi_base",
            "--seq-epochs",
            "1",
            "--spatial-epochs",
            "1",
            "--seq-hidden",
            "4",
            "--seq-dense",
            "4",
            "--bins",
            "16x12",
            "--trees",
            "3",
            "--bootstrap",
            "1000",
            "--permutation-samples",
            "500",
            "--out",
            out.to_str().unwrap(),
        ]);
        fs::read(out.join("report.json")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["sessions"], 16);
}

#[test]
fn tied_timestamps_need_jitter_flag() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 1);
    let path = dir.path().join("sessions").join("m001.json");
    let mut log: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    let t0 = log["decisions"][0]["t"].clone();
    log["decisions"][1]["t"] = t0;
    fs::write(&path, serde_json::to_vec_pretty(&log).unwrap()).unwrap();
    let args = |jitter: bool| {
        let mut v = vec![
            "label".to_string(),
            "--task".into(),
            dir.path().join("task.json").to_str().unwrap().into(),
            "--reference".into(),
            dir.path().join("reference.csv").to_str().unwrap().into(),
            "--sessions".into(),
            dir.path().join("sessions").to_str().unwrap().into(),
            "--out".into(),
            dir.path().join("labels.json").to_str().unwrap().into(),
        ];
        if jitter {
            v.push("--jitter-ties".into());
        }
        v
    };
    let strict = args(false);
    let strict = mexi(&strict.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("m001.json"));
    let jitter = args(true);
    ok(&jitter.iter().map(String::as_str).collect::<Vec<_>>());
}
