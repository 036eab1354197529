use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffirl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn graph_file(dir: &Path) -> PathBuf {
    let path = dir.join("net.edges");
    fs::write(
        &path,
        "n=5 targets=4,5\n1 4\n1 2\n2 1\n2 5\n3 2\n3 4\n3 5\n",
    )
    .unwrap();
    path
}

fn actions_file(dir: &Path, rows: &[[f64; 2]]) -> PathBuf {
    let path = dir.join("actions.csv");
    let mut text = String::from("u1,u2\n");
    for r in rows {
        text.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates `steps` steps with known parameters and returns the series path.
fn generated_series(dir: &Path, steps: usize) -> PathBuf {
    let g = graph_file(dir);
    let rows: Vec<[f64; 2]> = (0..=steps)
        .map(|t| [(t as f64 * 0.7).sin(), (t as f64 * 1.3).cos()])
        .collect();
    let a = actions_file(dir, &rows);
    let out = dir.join("sim");
    let o = run(&[
        "simulate", "--graph", s(&g), "--alpha", "1", "--decay", "6.01", "--tau", "2",
        "--initial", "0.5,-0.4,0.2", "--actions", s(&a), "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("trajectory.csv")
}

#[test]
fn consensus_simulation_is_constant_and_has_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let a = actions_file(dir.path(), &[[0.4, 0.4]; 6]);
    let out = dir.path().join("out");
    let o = run(&[
        "simulate", "--graph", s(&g), "--alpha", "1.8", "--decay", "6.01", "--initial",
        "0.4,0.4,0.4", "--actions", s(&a), "--out", s(&out), "--seed", "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let fields: Vec<f64> = r.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!(fields.iter().all(|&v| (v - 0.4).abs() < 1e-15), "{r}");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["steps"], 5);
}

#[test]
fn missing_graph_is_a_validation_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let a = actions_file(dir.path(), &[[0.0, 0.0]; 2]);
    let o = run(&[
        "simulate", "--graph", "/no/such/graph.edges", "--alpha", "1", "--decay", "2",
        "--initial", "0,0,0", "--actions", s(&a), "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/no/such/graph.edges"));
}

#[test]
fn verify_bias_exit_codes() {
    let hk = run(&["verify-bias", "--kernel", "hk", "--eps", "0.4", "0.4", "--samples", "500"]);
    assert_eq!(code(&hk), 1);
    assert!(stdout(&hk).contains("x_ref="));

    let cont = run(&["verify-bias", "--kernel", "continuous", "--samples", "500"]);
    assert_eq!(code(&cont), 1);

    let unknown = run(&["verify-bias", "--kernel", "nope"]);
    assert_eq!(code(&unknown), 2);

    let dir = tempfile::tempdir().unwrap();
    let tanh = run(&[
        "verify-bias", "--kernel", "tanh_power", "--alpha", "1.8", "--samples", "2000", "--out",
        s(dir.path()),
    ]);
    let text = stdout(&tanh);
    // every structural condition holds; two sampled behaviours have counterexamples
    assert!(text.lines().filter(|l| l.contains("condition")).all(|l| l.starts_with("PASS")));
    assert_eq!(code(&tanh), 1);
    let report = read_json(&dir.path().join("bias_report.json"));
    assert_eq!(report["all_hold"], false);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn fit_recovers_generated_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let series = generated_series(dir.path(), 18);
    let g = dir.path().join("net.edges");
    let out = dir.path().join("fit");
    let o = run(&[
        "fit", "--graph", s(&g), "--series", s(&series), "--tau", "2", "--restarts", "2",
        "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&out.join("fit.json"));
    for a in report["model"]["alpha"].as_array().unwrap() {
        assert!((a.as_f64().unwrap() - 1.0).abs() < 0.05, "{report}");
    }
    assert!((report["model"]["decay"].as_f64().unwrap() - 6.01).abs() < 0.5);
    assert_eq!(report["non_identifiable"], false);
    assert!(report["loss"].as_f64().unwrap() < 1e-10);
}

#[test]
fn fit_validation_and_consensus_flag() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let short = dir.path().join("short.csv");
    fs::write(&short, "t,x1,x2,x3,u1,u2\n0,0,0,0,0,0\n1,0,0,0,0,0\n").unwrap();
    let o = run(&["fit", "--graph", s(&g), "--series", s(&short), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);

    let flat = dir.path().join("flat.csv");
    let mut text = String::from("t,x1,x2,x3,u1,u2\n");
    for t in 0..8 {
        text.push_str(&format!("{t},0.3,0.3,0.3,0.3,0.3\n"));
    }
    fs::write(&flat, text).unwrap();
    let out = dir.path().join("flat");
    let o = run(&[
        "fit", "--graph", s(&g), "--series", s(&flat), "--restarts", "2", "--max-sweeps", "2",
        "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&out.join("fit.json"))["non_identifiable"], true);
}

#[test]
fn learn_windows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let series = generated_series(dir.path(), 10);
    let g = dir.path().join("net.edges");
    let model = dir.path().join("model.json");
    fs::write(&model, r#"{"model": {"alpha": [1, 1, 1], "decay": 6.01, "tau": 2}}"#).unwrap();

    let one = run(&[
        "learn", "--graph", s(&g), "--series", s(&series), "--model", s(&model), "--window", "1",
        "--out", s(dir.path()),
    ]);
    assert_eq!(code(&one), 2);

    for window in ["3", "4"] {
        let mut reports = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("w{window}_{rep}"));
            let o = run(&[
                "learn", "--graph", s(&g), "--series", s(&series), "--model", s(&model),
                "--window", window, "--restarts", "6", "--seed", "3", "--out", s(&out),
            ]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            assert!(stdout(&o).contains("r_4(x, u) ="));
            reports.push(fs::read_to_string(out.join("learn.json")).unwrap());
        }
        assert_eq!(reports[0], reports[1]);
        let r: Value = serde_json::from_str(&reports[0]).unwrap();
        let a: Vec<f64> = r["importance"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        for row in r["theta"].as_array().unwrap() {
            let l1: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap().abs()).sum();
            assert!((l1 - 1.0).abs() < 1e-6);
        }
        assert_eq!(r["window"].as_u64().unwrap().to_string(), window);
    }
}

#[test]
fn export_counts_domains() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    fs::write(
        &series,
        "t,x1,x2,x3,u1,u2\n0,0.5,0.5,0.5,1,1\n1,0.2,0,-0.1,1,1\n",
    )
    .unwrap();
    let out = dir.path().join("ex");
    let o = run(&["export", "--series", s(&series), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let counts = fs::read_to_string(out.join("domains.csv")).unwrap();
    assert_eq!(counts, "t,supporting,opposing,neutral\n0,3,0,0\n1,1,1,1\n");
    let long = fs::read_to_string(out.join("opinions.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 2 * 5);
    assert!(long.contains("1,4,target,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let a = actions_file(dir.path(), &[[0.1, -0.1]; 3]);
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        serde_json::json!({
            "graph": s(&g), "actions": s(&a), "alpha": [1.0], "decay": 6.01, "tau": 3,
            "initial": [0.1, 0.2, 0.3], "out": s(&out), "seed": 11
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&["--config", s(&cfg), "simulate", "--tau", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["tau"], 1);
    assert_eq!(manifest["seed"], 11);

    fs::write(&cfg, r#"{"grpah": "x"}"#).unwrap();
    let bad = run(&["--config", s(&cfg), "export"]);
    assert_eq!(code(&bad), 2);
}
