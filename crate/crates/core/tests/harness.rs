use plirls::harness::{self, Instance, RunConfig};
use plirls::Status;

fn config(problem: &str, instance: &str, extra: &str) -> String {
    format!(r#"{{"schema": 1, "problem": "{problem}", "instance": {instance}{extra}}}"#)
}

#[test]
fn defaults_fill_in_the_algorithm_section() {
    let cfg = RunConfig::from_json(&config("sparse-lsq", r#"{"generate": {"seed": 1, "rows": 10, "cols": 4}}"#, "")).unwrap();
    assert_eq!(cfg.algorithm.gamma, 1.1);
    assert_eq!(cfg.algorithm.nu, 1.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let gen = r#"{"generate": {"seed": 1, "rows": 10, "cols": 4}}"#;
    for bad in [
        config("sparse-lsq", gen, r#", "algorithm": {"gamma": 1.0}"#),
        config("sparse-lsq", gen, r#", "algorithm": {"nu": 1.5}"#),
        config("sparse-lsq", gen, r#", "algorithm": {"epsilon": 0}"#),
        config("sparse-lsq", gen, r#", "colour": "red""#),
        config("nonsense", gen, ""),
        r#"{"schema": 2, "problem": "lowrank", "instance": {"generate": {"seed": 1, "rows": 3, "cols": 3}}}"#.into(),
        config("custom", gen, ""),
    ] {
        assert!(RunConfig::from_json(&bad).is_err(), "accepted {bad}");
    }
}

#[test]
fn generated_instances_are_seeded() {
    let cfg = RunConfig::from_json(&config(
        "l0-regression",
        r#"{"generate": {"seed": 5, "rows": 12, "cols": 5, "sparsity": 2, "noise_fraction": 0.25}}"#,
        "",
    ))
    .unwrap();
    let (first, again, other) = (
        harness::load_instance(&cfg, None).unwrap(),
        harness::load_instance(&cfg, None).unwrap(),
        harness::load_instance(&cfg, Some(6)).unwrap(),
    );
    let Instance::Regression { a, b, truth } = &first else { panic!("expected a regression instance") };
    assert_eq!(a.dim(), (12, 5));
    assert_eq!(truth.as_ref().unwrap().iter().filter(|v| **v != 0.0).count(), 2);
    let clean = a.dot(truth.as_ref().unwrap());
    assert_eq!((b - &clean).iter().filter(|v| v.abs() > 1e-12).count(), 3);
    let Instance::Regression { b: b2, .. } = &again else { unreachable!() };
    let Instance::Regression { b: b3, .. } = &other else { unreachable!() };
    assert_eq!(b, b2);
    assert_ne!(b, b3);
}

#[test]
fn file_instances_solve_like_generated_ones() {
    let dir = tempfile::tempdir().unwrap();
    let gen = r#"{"generate": {"seed": 3, "rows": 20, "cols": 6, "sparsity": 2}}"#;
    let algorithm = r#", "algorithm": {"epsilon": 0.5, "lambda": 10, "max_iters": 50000}"#;
    let generated = RunConfig::from_json(&config("sparse-lsq", gen, algorithm)).unwrap();
    harness::write_instance(&harness::load_instance(&generated, None).unwrap(), dir.path()).unwrap();

    let files = r#"{"files": {"a": "A.txt", "b": "b.txt", "truth": "x_true.txt"}}"#;
    let path = dir.path().join("run.json");
    std::fs::write(&path, config("sparse-lsq", files, algorithm)).unwrap();
    let from_files = RunConfig::load(&path).unwrap();

    let (a, b) = (harness::solve(&generated, None).unwrap(), harness::solve(&from_files, None).unwrap());
    assert_eq!(a.summary.status, Status::Converged);
    assert_eq!(a.summary.iterations, b.summary.iterations);
    assert!((a.summary.final_objective - b.summary.final_objective).abs() < 1e-9);
    assert!(b.summary.recovery_error.unwrap() < 0.2);
}

#[test]
fn outputs_and_plot_data_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(&config(
        "multiblock",
        r#"{"generate": {"seed": 2, "rows": 6, "cols": 5, "noise_fraction": 0.1}}"#,
        r#", "algorithm": {"epsilon": 0.5, "max_iters": 200}"#,
    ))
    .unwrap();
    let out = harness::solve(&cfg, None).unwrap();
    harness::write_output(&out, dir.path()).unwrap();
    for name in ["trace.csv", "trace.json", "summary.json", "solution.txt"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["problem"], "multiblock");

    let plot = dir.path().join("trace_plot.dat");
    harness::trace_plot(&dir.path().join("trace.csv"), &plot).unwrap();
    let lines = std::fs::read_to_string(plot).unwrap();
    assert_eq!(lines.lines().filter(|l| !l.starts_with('#')).count(), out.summary.iterations);
}

#[test]
fn batches_return_results_in_job_order() {
    let squares = harness::run_batch((0..20u64).collect(), 4, |i| i * i);
    assert_eq!(squares, (0..20u64).map(|i| i * i).collect::<Vec<_>>());
}
