use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn plirls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plirls")).args(args).output().expect("binary runs")
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.json")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{"schema": 1, "problem": "l0-regression",
  "instance": {"generate": {"seed": 3, "rows": 12, "cols": 5, "sparsity": 2, "noise_fraction": 0.2}},
  "algorithm": {"epsilon": 0.5, "lambda": 0.05, "max_iters": 300}}"#;

fn objectives(trace: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(trace).unwrap();
    text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn demo_converges_with_monotone_trace() {
    let out = tempfile::tempdir().unwrap();
    let run = plirls(&["solve", "--config", demo_config().to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let f = objectives(&out.path().join("trace.csv"));
    assert!(!f.is_empty());
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "converged");
    assert!(summary["final_w_norm"].as_f64().unwrap() <= 1e-6);
    for key in ["iterations", "final_objective", "recovery_error"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn malformed_json_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"schema": 1, "problem": "#);
    let run = plirls(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("error"));
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("\"max_iters\": 300", "\"max_iters\": 300, \"momentum\": 0.9");
    let cfg = write_config(dir.path(), "extra.json", &body);
    let run = plirls(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn single_iteration_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.json", &SMALL.replace("300", "1"));
    let run = plirls(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(objectives(&dir.path().join("trace.csv")).len(), 1);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let mut traces = Vec::new();
    for (name, seed) in [("a", "11"), ("b", "11"), ("c", "12")] {
        let out = dir.path().join(name);
        plirls(&["solve", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        traces.push(std::fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_ne!(traces[0], traces[2]);
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    for name in ["x", "y"] {
        let run = plirls(&["generate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join(name).to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(0));
    }
    for file in ["A.txt", "b.txt", "x_true.txt"] {
        assert_eq!(
            std::fs::read(dir.path().join("x").join(file)).unwrap(),
            std::fs::read(dir.path().join("y").join(file)).unwrap()
        );
    }
}

#[test]
fn files_source_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = write_config(dir.path(), "gen.json", SMALL);
    plirls(&["generate", "--config", gen.to_str().unwrap(), "--out", dir.path().join("inst").to_str().unwrap()]);
    let body = r#"{"schema": 1, "problem": "l0-regression",
      "instance": {"files": {"a": "inst/A.txt", "b": "inst/b.txt", "truth": "inst/x_true.txt"}},
      "algorithm": {"epsilon": 0.5, "lambda": 0.05, "max_iters": 300}}"#;
    let files = write_config(dir.path(), "files.json", body);
    let (a, b) = (dir.path().join("ga"), dir.path().join("fa"));
    plirls(&["solve", "--config", gen.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let run = plirls(&["solve", "--config", files.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_ne!(run.status.code(), Some(1), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn batch_writes_one_directory_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = write_config(dir.path(), "first.json", SMALL);
    let second = write_config(dir.path(), "second.json", &SMALL.replace("\"seed\": 3", "\"seed\": 4"));
    let out = dir.path().join("batch");
    let run = Command::new(env!("CARGO_BIN_EXE_plirls"))
        .env("PLIRLS_THREADS", "2")
        .args(["solve", "--config", first.to_str().unwrap(), "--config", second.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(matches!(run.status.code(), Some(0) | Some(2)));
    assert!(out.join("first/summary.json").exists());
    assert!(out.join("second/summary.json").exists());
}

#[test]
fn trace_plot_writes_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    plirls(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let run = plirls(&["trace-plot", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("trace_plot.dat")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# k objective w_norm"));
    assert_eq!(lines.next().unwrap().split_whitespace().count(), 3);
}

#[test]
fn quick_check_passes() {
    let run = plirls(&["check", "--level", "quick"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
}

#[test]
fn injected_fault_is_reported() {
    let run = plirls(&["check", "--level", "quick", "--inject-fault"]);
    assert_ne!(run.status.code(), Some(0));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("F(x^k) <= F(x^{k-1})") || err.contains("F(x^{k-1}) - F(x^k)"), "{err}");
    assert!(err.contains("seed"), "{err}");
}

#[test]
fn bad_level_exits_1() {
    assert_eq!(plirls(&["check", "--level", "medium"]).status.code(), Some(1));
}
