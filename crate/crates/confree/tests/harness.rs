//! Harness-level integration tests: backprop accounting, persistence,
//! summary recomputation, failure handling, and the conflict-case
//! comparison.

use confree::harness::{
    compare_methods, parse_seed_csv, relative_improvement, run_experiment, run_single_seed,
    ExperimentConfig, HarnessError, MethodName,
};

fn toml_config(name: &str, problem: &str, method: &str, iterations: u64, out: &str) -> String {
    format!(
        r#"
schema = 1
name = "{name}"
problem = "{problem}"
method = "{method}"
iterations = {iterations}
seeds = [0, 1]
eval_every = 10
out_dir = "{out}"

[quadratic]
losses = 3
dim = 8
"#
    )
}

fn cfg(name: &str, problem: &str, method: &str, iterations: u64, out: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&toml_config(name, problem, method, iterations, out)).unwrap()
}

#[test]
fn backprop_accounting_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let iters = 40;
    // quadratic suite has m = 3 losses.
    for (method, expected) in [
        ("config", 3 * iters),
        ("pcgrad", 3 * iters),
        ("imtlg", 3 * iters),
        ("adam-sum", iters),
        ("m-config", iters),
        ("ma-config", iters),
    ] {
        let c = cfg(&format!("bp-{method}"), "quadratic", method, iters, &out);
        let run = run_single_seed(&c, 0);
        assert!(!run.failed, "{method} failed unexpectedly");
        assert_eq!(
            run.final_backprops, expected,
            "{method}: backprops {} != {expected}",
            run.final_backprops
        );
    }
}

#[test]
fn summary_recomputes_from_raw_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let c = cfg("recompute", "quadratic", "config", 30, &out);
    let summary = run_experiment(&c, false).unwrap();

    let mut best_per_seed = Vec::new();
    for &seed in &c.seeds {
        let path = dir.path().join("recompute").join(format!("seed{seed}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        let records = parse_seed_csv(&text, seed);
        assert!(!records.is_empty());
        let best = records
            .iter()
            .map(|r| r.test_mse)
            .fold(f64::INFINITY, f64::min);
        best_per_seed.push(best);
    }
    let mean = best_per_seed.iter().sum::<f64>() / best_per_seed.len() as f64;
    assert_eq!(mean, summary.mean_best_test_mse, "mean must match exactly");
    for (run, best) in summary.runs.iter().zip(&best_per_seed) {
        assert_eq!(run.best_test_mse, *best);
    }
}

#[test]
fn relative_improvement_anchors() {
    assert_eq!(relative_improvement(2.0, 1.0).unwrap(), 50.0);
    assert_eq!(relative_improvement(1.0, 2.0).unwrap(), -100.0);
    assert_eq!(relative_improvement(3.0, 3.0).unwrap(), 0.0);
    assert!(matches!(
        relative_improvement(0.0, 1.0),
        Err(HarnessError::NonPositiveBaseline(_))
    ));
    assert!(relative_improvement(-1.0, 1.0).is_err());
}

#[test]
fn diverged_run_is_marked_failed_and_other_seeds_continue() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
schema = 1
name = "nan-run"
problem = "quadratic"
method = "adam-sum"
iterations = 30
seeds = [0, 1]
eval_every = 5
out_dir = "{}"

[lr]
schedule = "constant"
initial = 1e200
final = 1e200
warmup = 0

[quadratic]
losses = 2
dim = 4
"#,
        dir.path().display()
    );
    let c = ExperimentConfig::from_toml(&text).unwrap();
    let summary = run_experiment(&c, false).unwrap();
    assert_eq!(summary.runs.len(), 2, "all seeds still produce results");
    assert_eq!(summary.failed_seeds, vec![0, 1]);
    assert!(summary.mean_best_test_mse.is_nan());
    let csv = std::fs::read_to_string(dir.path().join("nan-run/summary.csv")).unwrap();
    assert!(csv.contains("NaN"), "summary records NaN:\n{csv}");
}

#[test]
fn failure_vector_landscapes_only_config_stays_conflict_free() {
    // The two published failure sets break one baseline each: the
    // symmetric mutually conflicting triple trips PCGrad (IMTL-G's
    // weights are uniform there by symmetry, so it stays clean), and
    // the skewed no-pairwise-conflict triple flips IMTL-G's sign (no
    // conflicts, so PCGrad degenerates to the harmless sum). Only the
    // conflict-free update is clean on both at every step.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let mk = |name: &str, problem: &str, method: &str| {
        let text = format!(
            r#"
schema = 1
name = "{name}"
problem = "{problem}"
method = "{method}"
iterations = 50
seeds = [0, 1]
eval_every = 10
out_dir = "{out}"
"#
        );
        ExperimentConfig::from_toml(&text).unwrap()
    };
    let by_method = |rows: &[confree::harness::ComparisonRow], m: MethodName| {
        rows.iter().find(|r| r.method == m).cloned().unwrap()
    };

    let rows = compare_methods(
        &[
            mk("cc-config", "conflict-case", "config"),
            mk("cc-pcgrad", "conflict-case", "pcgrad"),
            mk("cc-imtlg", "conflict-case", "imtlg"),
        ],
        false,
    )
    .unwrap();
    let config = by_method(&rows, MethodName::Config);
    assert_eq!(
        config.conflict_free_steps, config.aggregation_steps,
        "config must be conflict-free at every step"
    );
    let pcgrad = by_method(&rows, MethodName::Pcgrad);
    assert!(
        pcgrad.conflict_free_steps < pcgrad.aggregation_steps,
        "pcgrad conflicts on the symmetric triple ({} of {} steps conflict-free)",
        pcgrad.conflict_free_steps,
        pcgrad.aggregation_steps
    );

    let rows = compare_methods(
        &[
            mk("ic-config", "imtlg-case", "config"),
            mk("ic-imtlg", "imtlg-case", "imtlg"),
        ],
        false,
    )
    .unwrap();
    let config = by_method(&rows, MethodName::Config);
    assert_eq!(config.conflict_free_steps, config.aggregation_steps);
    let imtlg = by_method(&rows, MethodName::Imtlg);
    assert_eq!(
        imtlg.conflict_free_steps, 0,
        "imtl-g flips sign on the skewed triple at every step"
    );
    assert!(dir.path().join("comparison.csv").exists());
}

#[test]
fn compare_single_config_reports_zero_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let rows = compare_methods(&[cfg("solo", "quadratic", "config", 10, &out)], false).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].improvement, 0.0);
}

#[test]
fn compare_identical_configs_under_different_names_match() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let rows = compare_methods(
        &[
            cfg("twin-a", "quadratic", "pcgrad", 20, &out),
            cfg("twin-b", "quadratic", "pcgrad", 20, &out),
        ],
        false,
    )
    .unwrap();
    assert_eq!(rows[0].mean_best_test_mse, rows[1].mean_best_test_mse);
    assert_eq!(rows[0].std_best_test_mse, rows[1].std_best_test_mse);
}

#[test]
fn mismatched_seed_lists_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let a = cfg("seeds-a", "quadratic", "config", 10, &out);
    let mut b = cfg("seeds-b", "quadratic", "adam-sum", 10, &out);
    b.seeds = vec![7];
    let err = compare_methods(&[a, b], false).unwrap_err();
    assert!(matches!(err, HarnessError::Mismatch(_)));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let a = run_experiment(&cfg("par-a", "quadratic", "m-config", 25, &out), false).unwrap();
    let b = run_experiment(&cfg("par-b", "quadratic", "m-config", 25, &out), true).unwrap();
    for (ra, rb) in a.runs.iter().zip(&b.runs) {
        assert_eq!(ra.seed, rb.seed);
        assert_eq!(ra.best_test_mse, rb.best_test_mse);
        assert_eq!(ra.records, rb.records);
    }
}

#[test]
fn pinn_training_is_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
schema = 1
name = "det-burgers"
problem = "burgers"
method = "m-config"
iterations = 12
seeds = [3]
eval_every = 4
out_dir = "{}"

[network]
hidden_layers = 2
width = 8

[samples]
interior = 32
boundary = 8
initial = 8
"#,
        dir.path().display()
    );
    let c = ExperimentConfig::from_toml(&text).unwrap();
    let a = run_single_seed(&c, 3);
    let b = run_single_seed(&c, 3);
    assert_eq!(a.records, b.records, "TrainRecords must match bitwise");
    assert_eq!(a.best_test_mse.to_bits(), b.best_test_mse.to_bits());
}

#[test]
fn zero_iteration_summary_is_initial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let summary = run_experiment(&cfg("zero", "toy", "config", 0, &out), false).unwrap();
    for run in &summary.runs {
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].iteration, 0);
        assert_eq!(run.best_iteration, 0);
        assert_eq!(run.final_backprops, 0);
    }
}
