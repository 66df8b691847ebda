use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn docquad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docquad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", stdout(o)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn fixtures(dir: &Path, seed: &str, count: &str) -> Output {
    docquad(&["--seed", seed, "--quiet", "fixtures", "--count", count, "--out-dir", p(dir)])
}

#[test]
fn iou_of_identical_quads() {
    let dir = TempDir::new().unwrap();
    let q = dir.path().join("q.json");
    fs::write(&q, "[[10, 10], [110, 12], [105, 80], [8, 75]]").unwrap();
    let o = docquad(&["iou", "--a", p(&q), "--b", p(&q)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "{\"iou\": 1.0}\n");

    let o = docquad(&["iou", "--a", "[[0,0],[1,0],[1,1],[0,1]]", "--b", "[[0.5,0],[1.5,0],[1.5,1],[0.5,1]]"]);
    let v = json(&o)["iou"].as_f64().unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = docquad(&["iou", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("usage"), "{}", stderr(&o));
    assert_eq!(docquad(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(docquad(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_grid_is_an_io_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let o = docquad(&["decode", "--grid", p(&missing)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("g.json");
    fs::write(&grid, r#"{"rows": 1, "cols": 1, "stride": 16, "alpha": 4, "data": [1.5, 1, 0, 0, 0, 1, 0]}"#).unwrap();
    let o = docquad(&["decode", "--grid", p(&grid)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn decode_reports_the_reference_cell() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("g.json");
    fs::write(&grid, r#"{"rows": 1, "cols": 1, "stride": 16, "alpha": 4, "data": [1, 1, 0, 0, 0, 1, 0]}"#).unwrap();
    let o = docquad(&["decode", "--grid", p(&grid)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let top = &json(&o)["top"];
    assert_eq!(top["confidence"], 1.0);
    let quad: Vec<[f64; 2]> = serde_json::from_value(top["quad"].clone()).unwrap();
    assert_eq!(quad, vec![[-24.0, -24.0], [40.0, -24.0], [40.0, 40.0], [-24.0, 40.0]]);
}

#[test]
fn fixtures_folds_and_eval_are_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        let o = fixtures(d, seed, "6");
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(json(&o)["count"], 6);
    }
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_ne!(snapshot(&a), snapshot(&c));

    let manifest = a.join("manifest.json");
    let folds = |seed: &str| docquad(&["--seed", seed, "folds", "--k", "3", "--manifest", p(&manifest)]);
    assert_eq!(folds("1").stdout, folds("1").stdout);
    let plan = json(&folds("1"));
    assert_eq!(plan["k"], 3);
    assert_eq!(plan["assignment"].as_object().unwrap().len(), 6);

    let plan_path = dir.path().join("plan.json");
    fs::write(&plan_path, folds("1").stdout).unwrap();
    let report_path = dir.path().join("report.csv");
    let o = docquad(&[
        "--out", p(&report_path), "eval", "--manifest", p(&manifest), "--folds", p(&plan_path),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&report_path).unwrap();
    assert!(csv.starts_with("kind,id,round,partition,n,iou,ocr_score,latency_ms"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("item,")).count(), 6);
}

#[test]
fn augment_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let fx = dir.path().join("fx");
    assert_eq!(fixtures(&fx, "3", "1").status.code(), Some(0));
    let manifest: Value = serde_json::from_slice(&fs::read(fx.join("manifest.json")).unwrap()).unwrap();
    let item = &manifest["items"][0];
    let image = fx.join(item["image_path"].as_str().unwrap());
    let quad = item["quad"].to_string();

    let run = |out: &Path, seed: &str| {
        docquad(&[
            "--seed", seed, "--quiet", "augment", "--image", p(&image), "--quad", &quad, "--count", "3",
            "--width", "160", "--height", "160", "--out-dir", p(out),
        ])
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = run(d, seed);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let snap = snapshot(&a);
    assert_eq!(snap.len(), 6);
    assert_eq!(snap, snapshot(&b));
    assert_ne!(snap, snapshot(&c));
    let meta: Value = serde_json::from_slice(&snap[Path::new("aug_0000.json")]).unwrap();
    assert!(meta["angles"]["roll"].as_f64().unwrap().abs() <= 45.0);
}

#[test]
fn failures_leave_no_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("aug");
    let o = docquad(&[
        "augment", "--image", p(&dir.path().join("nope.png")), "--quad", "[[0,0],[9,0],[9,9],[0,9]]",
        "--out-dir", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());

    // A bad quad is rejected before anything is written.
    let fx = dir.path().join("fx");
    assert_eq!(fixtures(&fx, "0", "1").status.code(), Some(0));
    let image = fx.join("images/fx0000.png");
    let o = docquad(&[
        "augment", "--image", p(&image), "--quad", "[[0,0],[9,9],[9,0],[0,9]]", "--out-dir", p(&out),
    ]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!out.exists());

    let report = dir.path().join("report.json");
    let o = docquad(&["--out", p(&report), "eval", "--manifest", p(&dir.path().join("none.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!report.exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".docquad-stage") || n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn rectify_and_score_ocr() {
    let dir = TempDir::new().unwrap();
    let fx = dir.path().join("fx");
    assert_eq!(fixtures(&fx, "4", "1").status.code(), Some(0));
    let page = dir.path().join("page.png");
    let o = docquad(&[
        "rectify", "--image", p(&fx.join("images/fx0000.png")), "--grid", p(&fx.join("grids/fx0000.json")),
        "--width", "300", "--output-image", p(&page),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(300), Some(200)));
    assert!(page.is_file());

    let gt = fx.join("entities/fx0000.json");
    let entities: Vec<Value> = serde_json::from_slice(&fs::read(&gt).unwrap()).unwrap();
    let by_name: serde_json::Map<String, Value> =
        entities.iter().map(|e| (e["name"].as_str().unwrap().to_owned(), e["text"].clone())).collect();
    let pred = dir.path().join("pred.json");
    fs::write(&pred, serde_json::json!({ "entities": by_name }).to_string()).unwrap();
    let o = docquad(&["score-ocr", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["score"], 1.0);

    // Name-keyed predictions are rejected in box mode.
    let o = docquad(&["score-ocr", "--gt", p(&gt), "--pred", p(&pred), "--mode", "box"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_prints_ordered_stats() {
    let o = docquad(&["bench", "--op", "decode", "--iters", "5", "--warmup", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["op"], "decode");
    assert_eq!(v["n"], 5);
    let f = |k: &str| v[k].as_f64().unwrap();
    assert!(f("min_ms") <= f("p50_ms") && f("p50_ms") <= f("p95_ms") && f("p95_ms") <= f("max_ms"));
    assert_eq!(docquad(&["bench", "--op", "nothing"]).status.code(), Some(1));
}
