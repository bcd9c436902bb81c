use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = r#"config_version = 1
[input]
kind = "synthetic"
n_nodes = 18
n_features = 3
n_classes = 3
noise = 0.05
seed = 2
[graph]
k = 8
[embed]
dim = 3
lr = 1e-3
epochs = 20
gradient = "analytic"
"#;

fn softman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softman"))
        .args(args)
        .output()
        .unwrap()
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{BASE}{extra}")).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn embed_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("out");
    let o = softman(&["embed", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["embedding.json", "loss_trace.csv", "graph.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let emb: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("embedding.json")).unwrap()).unwrap();
    assert_eq!(emb["dim"], 3);
    assert_eq!(emb["positions"].as_array().unwrap().len(), 18);
    assert_eq!(emb["loss_trace"].as_array().unwrap().len(), 21);
    assert_eq!(csv_rows(&out.join("loss_trace.csv")).len(), 21);
    let graph: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("graph.json")).unwrap()).unwrap();
    assert_eq!(graph["n"], 18);
    assert_eq!(graph["transform"], "identity");
}

#[test]
fn embed_is_repeatable_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "batch_pairs = 40\n");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = softman(&["embed", "--config", s(&cfg), "--seed", seed, "--out", s(&out)]);
        assert!(o.status.success());
        fs::read(out.join("embedding.json")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_ne!(a, run("c", "2"));
}

#[test]
fn missing_input_is_config_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "config_version = 1\n[input]\nkind = \"csv\"\npath = \"absent.csv\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = softman(&["embed", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!out.exists());

    let o = softman(&["embed", "--config", s(&dir.path().join("nope.toml"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = softman(&["embed", "--config", s(&cfg), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn csv_input_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::new();
    for i in 0..12 {
        let c = (i % 2) as f64;
        data.push_str(&format!("{},{},{}\n", c + 0.01 * i as f64, 1.0 - c, c * 0.5));
    }
    fs::write(dir.path().join("data.csv"), data).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "config_version = 1\noutput_dir = \"res\"\n[input]\nkind = \"csv\"\npath = \"data.csv\"\n[graph]\nk = 4\n[embed]\ndim = 3\nepochs = 3\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_softman"))
        .args(["embed", "--config", s(&cfg)])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("res/embedding.json").is_file());
}

#[test]
fn eval_columns_follow_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("out");
    assert!(softman(&["embed", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let emb = out.join("embedding.json");
    let graph = out.join("graph.json");

    let header = |metrics: &str, name: &str| {
        let dst = dir.path().join(name);
        let o = softman(&[
            "eval", "--embedding", s(&emb), "--graph", s(&graph), "--metrics", metrics, "--out", s(&dst),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = csv::Reader::from_path(dst.join("eval.csv")).unwrap();
        let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(r.records().count(), 1);
        h
    };
    assert_eq!(header("map", "e1"), vec!["map"]);
    assert_eq!(header("map,ad", "e2"), vec!["map", "ad"]);
    assert_eq!(header("ad", "e3"), vec!["ad"]);
}

#[test]
fn eval_rejects_mismatched_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let small = config(dir.path(), "");
    let a = dir.path().join("a");
    assert!(softman(&["embed", "--config", s(&small), "--out", s(&a)]).status.success());
    let big = dir.path().join("big.toml");
    fs::write(&big, BASE.replace("n_nodes = 18", "n_nodes = 21")).unwrap();
    let b = dir.path().join("b");
    assert!(softman(&["embed", "--config", s(&big), "--out", s(&b)]).status.success());
    let o = softman(&[
        "eval",
        "--embedding",
        s(&a.join("embedding.json")),
        "--graph",
        s(&b.join("graph.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("broken.json"), "{").unwrap();
    let o = softman(&[
        "eval",
        "--embedding",
        s(&dir.path().join("broken.json")),
        "--graph",
        s(&b.join("graph.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_grid_shapes_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[experiment]\nmissing_fractions = [0.0, 0.2]\nholdout_fractions = [0.0, 0.3]\ntrials = 3\nbase_seed = 4\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = softman(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    assert_eq!(csv_rows(&a.join("results.csv")).len(), 12);
    assert_eq!(csv_rows(&a.join("aggregates.csv")).len(), 4);
    let header = csv::Reader::from_path(a.join("results.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        vec![
            "missing_fraction", "holdout_fraction", "trial", "map", "ad", "accuracy",
            "final_loss", "epochs", "status", "seed"
        ]
    );
    let b = run("b");
    for f in ["results.csv", "aggregates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn simulate_records_failing_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[experiment]\nmissing_fractions = [0.0, 0.9]\ntrials = 1\n",
    );
    let out = dir.path().join("out");
    let o = softman(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success());
    let rows = csv_rows(&out.join("results.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][8], "ok");
    assert!(rows[1][8].starts_with("error"));
}

#[test]
fn simulate_without_grid_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let o = softman(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn geodesic_check_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = softman(&[
            "geodesic-check", "--n-pairs", "5", "--seed", "3", "--with-reference-pairs", "--out", s(&out),
        ]);
        assert!(o.status.success());
        let stdout = String::from_utf8_lossy(&o.stdout).to_string();
        assert!(stdout.contains("min") && stdout.contains("median") && stdout.contains("max"));
        out
    };
    let a = run("a");
    let rows = csv_rows(&a.join("geodesic_check.csv"));
    assert_eq!(rows.len(), 7);
    let coincident = &rows[5];
    assert_eq!(&coincident[2], "0.0");
    assert_eq!(&coincident[3], "0.0");
    assert_eq!(&coincident[5], "degenerate");
    let antipodal = &rows[6];
    let semimetric: f64 = antipodal[2].parse().unwrap();
    let ratio: f64 = antipodal[4].parse().unwrap();
    assert!((semimetric - 2f64.sqrt()).abs() < 0.1, "{semimetric}");
    assert!((ratio - 2.22).abs() < 0.1, "{ratio}");
    let b = run("b");
    assert_eq!(
        fs::read(a.join("geodesic_check.csv")).unwrap(),
        fs::read(b.join("geodesic_check.csv")).unwrap()
    );
}

#[test]
fn unknown_flag_is_config_error() {
    let o = softman(&["embed", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = softman(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}
