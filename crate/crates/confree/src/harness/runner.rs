//! Seeded training loops over any problem/method pair, with
//! best-checkpoint tracking and backprop accounting.

use super::config::{ExperimentConfig, MethodName, ProblemName};
use super::schedule::learning_rate;
use crate::aggregators::{
    config_update, imtlg_update, pcgrad_update, sum_update, AggregationResult, AggregatorError,
    DirectionWeights,
};
use crate::autodiff::MlpConfig;
use crate::optimizers::{Adam, AdamParams, MConfig, MaConfig, OptimError};
use crate::problems::{
    burgers_problem, conflict_case_problem, imtlg_case_problem, kovasznay_problem,
    quadratic_suite, toy_landscape, Problem, SampleCounts, BURGERS_NU,
};
use crate::vecmath::{GradientSet, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("configs disagree on {0}; comparison needs a shared problem and seeds")]
    Mismatch(String),
    #[error("baseline must be positive and finite, got {0}")]
    NonPositiveBaseline(f64),
}

/// One evaluation row. `iteration` doubles as the elapsed optimizer
/// step count (exactly one step per iteration for every method).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: u64,
    pub losses: Vec<f64>,
    pub test_mse: f64,
    pub backprops: u64,
    pub seed: u64,
}

/// Outcome of one seeded run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<TrainRecord>,
    pub best_test_mse: f64,
    pub best_iteration: u64,
    /// Per-loss values observed at the best checkpoint.
    pub losses_at_best: Vec<f64>,
    pub final_backprops: u64,
    /// Training hit a non-finite loss or gradient and was aborted.
    pub failed: bool,
    /// Steps whose aggregated update had a non-negative dot product
    /// with every loss gradient (aggregating methods only).
    pub conflict_free_steps: u64,
    pub aggregation_steps: u64,
    /// Wall-clock seconds for this run. Machine-dependent; backprop
    /// counts are the portable cost measure.
    pub wall_seconds: f64,
}

/// Per-experiment aggregate across seeds.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub name: String,
    pub problem: ProblemName,
    pub method: MethodName,
    pub loss_names: Vec<String>,
    pub runs: Vec<RunResult>,
    /// Mean/std of best test MSE over non-failed seeds (sample std,
    /// n-1 denominator; 0 for a single seed). NaN if every seed failed.
    pub mean_best_test_mse: f64,
    pub std_best_test_mse: f64,
    pub failed_seeds: Vec<u64>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Box<dyn Problem> {
    match cfg.problem {
        ProblemName::Burgers => Box::new(burgers_problem(
            MlpConfig {
                input_dim: 2,
                hidden_layers: cfg.network.hidden_layers,
                hidden_width: cfg.network.width,
                output_dim: 1,
            },
            SampleCounts {
                interior: cfg.samples.interior,
                boundary: cfg.samples.boundary,
                initial: cfg.samples.initial,
            },
            cfg.grouping.into(),
            BURGERS_NU,
        )),
        ProblemName::Kovasznay => Box::new(kovasznay_problem(
            MlpConfig {
                input_dim: 2,
                hidden_layers: cfg.network.hidden_layers,
                hidden_width: cfg.network.width,
                output_dim: 3,
            },
            SampleCounts {
                interior: cfg.samples.interior,
                boundary: cfg.samples.boundary,
                initial: 0,
            },
            40.0,
        )),
        ProblemName::Toy => Box::new(toy_landscape()),
        ProblemName::Quadratic => Box::new(quadratic_suite(
            cfg.quadratic.losses,
            cfg.quadratic.dim,
            cfg.quadratic.seed,
        )),
        ProblemName::ConflictCase => Box::new(conflict_case_problem()),
        ProblemName::ImtlgCase => Box::new(imtlg_case_problem()),
    }
}

enum Engine {
    Adam(Adam),
    MConfig(MConfig),
    MaConfig(MaConfig),
}

fn evaluate(problem: &mut dyn Problem, theta: &Vector, iteration: u64, seed: u64) -> TrainRecord {
    TrainRecord {
        iteration,
        losses: problem.loss_values(theta),
        test_mse: problem.test_metric(theta),
        backprops: problem.backprops(),
        seed,
    }
}

fn aggregate(
    cfg: &ExperimentConfig,
    grads: &GradientSet,
    seed: u64,
    iter: u64,
) -> Result<AggregationResult, AggregatorError> {
    match cfg.method {
        MethodName::Config => config_update(
            grads,
            &DirectionWeights::uniform(grads.num_losses()),
            cfg.eps,
        ),
        MethodName::Pcgrad => Ok(pcgrad_update(
            grads,
            crate::problems::pcgrad_step_seed(seed, iter),
            cfg.eps,
        )),
        MethodName::Imtlg => imtlg_update(grads, cfg.eps),
        MethodName::AdamSum => Ok(sum_update(grads, cfg.eps)),
        _ => unreachable!("momentum methods do not aggregate full gradient sets"),
    }
}

/// Train one seed to completion. Never panics on numerical failure:
/// a non-finite loss or gradient marks the run failed and stops it.
pub fn run_single_seed(cfg: &ExperimentConfig, seed: u64) -> RunResult {
    let started = std::time::Instant::now();
    let mut problem = build_problem(cfg);
    let m = problem.num_losses();
    let dim = problem.param_count();
    let mut theta = problem.init_params(seed);
    let adam_params = AdamParams::from(&cfg.adam);

    let mut engine = match cfg.method {
        MethodName::MConfig => Engine::MConfig(MConfig::new(
            m,
            dim,
            cfg.lr.initial,
            cfg.eps,
            adam_params,
        )),
        MethodName::MaConfig => Engine::MaConfig(MaConfig::new(
            m,
            dim,
            cfg.lr.initial,
            cfg.eps,
            adam_params,
        )),
        _ => Engine::Adam(Adam::new(dim, cfg.lr.initial, adam_params)),
    };

    let mut records = Vec::new();
    let mut failed = false;
    let mut conflict_free_steps = 0;
    let mut aggregation_steps = 0;

    problem.resample(0, seed);
    let first = evaluate(problem.as_mut(), &theta, 0, seed);
    let mut best_test_mse = first.test_mse;
    let mut best_iteration = 0;
    let mut losses_at_best = first.losses.clone();
    if !first.test_mse.is_finite() {
        failed = true;
    }
    records.push(first);

    for t in 1..=cfg.iterations {
        if failed {
            break;
        }
        problem.resample(t, seed);
        let lr = learning_rate(&cfg.lr, t - 1, cfg.iterations);

        let step: Result<(), OptimError> = match (&mut engine, cfg.method) {
            (Engine::Adam(adam), MethodName::AdamSum) => {
                adam.lr = lr;
                let g = problem.sum_gradient(&theta);
                adam.step(&g, &mut theta)
            }
            (Engine::Adam(adam), _) => {
                adam.lr = lr;
                let rows: Vec<Vector> =
                    (0..m).map(|i| problem.loss_gradient(i, &theta)).collect();
                match GradientSet::new(rows) {
                    Err(_) => Err(OptimError::NonFiniteGradient),
                    Ok(grads) => match aggregate(cfg, &grads, seed, t) {
                        Err(_) => Err(OptimError::NonFiniteGradient),
                        Ok(agg) => {
                            aggregation_steps += 1;
                            if agg.conflict_free {
                                conflict_free_steps += 1;
                            }
                            adam.step(&agg.update, &mut theta)
                        }
                    },
                }
            }
            (Engine::MConfig(mc), _) => {
                mc.lr = lr;
                let i = (t % m as u64) as usize;
                let g = problem.loss_gradient(i, &theta);
                mc.step(i, &g, &mut theta)
            }
            (Engine::MaConfig(ma), _) => {
                ma.lr = lr;
                let i = (t % m as u64) as usize;
                let g = problem.loss_gradient(i, &theta);
                ma.step(i, &g, &mut theta)
            }
        };

        if step.is_err() || !theta.is_finite() {
            failed = true;
        }

        if failed || t % cfg.eval_every == 0 || t == cfg.iterations {
            let rec = evaluate(problem.as_mut(), &theta, t, seed);
            let bad =
                !rec.test_mse.is_finite() || rec.losses.iter().any(|l| !l.is_finite());
            if bad {
                failed = true;
            } else if rec.test_mse < best_test_mse {
                best_test_mse = rec.test_mse;
                best_iteration = t;
                losses_at_best = rec.losses.clone();
            }
            records.push(rec);
        }
    }

    RunResult {
        seed,
        records,
        best_test_mse: if failed { f64::NAN } else { best_test_mse },
        best_iteration,
        losses_at_best,
        final_backprops: problem.backprops(),
        failed,
        conflict_free_steps,
        aggregation_steps,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Maximum worker threads: the CONFIG_GRAD_THREADS environment
/// variable, defaulting to the machine's parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("CONFIG_GRAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n,
        _ => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// Run every seed of one experiment (optionally with per-seed threads)
/// and write `runs/<name>/seed<i>.csv`, `summary.csv`, and `meta.txt`
/// under the config's output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    parallel: bool,
) -> Result<ExperimentSummary, HarnessError> {
    cfg.validate()?;
    let runs: Vec<RunResult> = if parallel && cfg.seeds.len() > 1 {
        run_seeds_parallel(cfg, thread_cap().max(1))
    } else {
        cfg.seeds
            .iter()
            .map(|&seed| run_single_seed(cfg, seed))
            .collect()
    };

    let loss_names = build_problem(cfg).loss_names();
    let ok: Vec<f64> = runs
        .iter()
        .filter(|r| !r.failed)
        .map(|r| r.best_test_mse)
        .collect();
    let mean = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    };
    let std = sample_std(&ok, mean);
    let failed_seeds = runs.iter().filter(|r| r.failed).map(|r| r.seed).collect();

    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        problem: cfg.problem,
        method: cfg.method,
        loss_names,
        runs,
        mean_best_test_mse: mean,
        std_best_test_mse: std,
        failed_seeds,
    };
    super::output::write_experiment(cfg, &summary)?;
    Ok(summary)
}

fn run_seeds_parallel(cfg: &ExperimentConfig, cap: usize) -> Vec<RunResult> {
    let seeds = cfg.seeds.clone();
    let mut results: Vec<Option<RunResult>> = Vec::new();
    results.resize_with(seeds.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mx = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..cap.min(seeds.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= seeds.len() {
                    break;
                }
                let r = run_single_seed(cfg, seeds[idx]);
                results_mx.lock().expect("poisoned")[idx] = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

/// Percent improvement over a baseline error:
/// `+50` means half the baseline, `-100` means twice the baseline.
pub fn relative_improvement(baseline: f64, method: f64) -> Result<f64, HarnessError> {
    if baseline.is_nan() || baseline <= 0.0 || !baseline.is_finite() {
        return Err(HarnessError::NonPositiveBaseline(baseline));
    }
    if method <= baseline {
        Ok(100.0 * (1.0 - method / baseline))
    } else {
        Ok(-100.0 * (method / baseline - 1.0))
    }
}

/// One row of the method-comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub method: MethodName,
    pub mean_best_test_mse: f64,
    pub std_best_test_mse: f64,
    /// Percent improvement vs the adam-sum row (0 for the baseline).
    pub improvement: f64,
    pub mean_backprops: f64,
    pub conflict_free_steps: u64,
    pub aggregation_steps: u64,
    pub failed_seeds: usize,
}

/// Run several configs sharing a problem and seed list, then tabulate
/// them against the adam-sum baseline row (or the first row if no
/// adam-sum config is present). Writes `comparison.csv` to the shared
/// output directory alongside each experiment's own files.
pub fn compare_methods(
    cfgs: &[ExperimentConfig],
    parallel: bool,
) -> Result<Vec<ComparisonRow>, HarnessError> {
    assert!(!cfgs.is_empty(), "compare_methods needs at least one config");
    for c in &cfgs[1..] {
        if c.problem != cfgs[0].problem {
            return Err(HarnessError::Mismatch("problem".into()));
        }
        if c.seeds != cfgs[0].seeds {
            return Err(HarnessError::Mismatch("seeds".into()));
        }
    }
    let summaries: Vec<ExperimentSummary> = cfgs
        .iter()
        .map(|c| run_experiment(c, parallel))
        .collect::<Result<_, _>>()?;

    let baseline_idx = summaries
        .iter()
        .position(|s| s.method == MethodName::AdamSum)
        .unwrap_or(0);
    let baseline = summaries[baseline_idx].mean_best_test_mse;

    let mut rows = Vec::with_capacity(summaries.len());
    for (i, s) in summaries.iter().enumerate() {
        let improvement = if i == baseline_idx {
            0.0
        } else if baseline.is_finite() && baseline > 0.0 && s.mean_best_test_mse.is_finite() {
            relative_improvement(baseline, s.mean_best_test_mse)?
        } else {
            f64::NAN
        };
        let mean_backprops = s
            .runs
            .iter()
            .map(|r| r.final_backprops as f64)
            .sum::<f64>()
            / s.runs.len() as f64;
        rows.push(ComparisonRow {
            name: s.name.clone(),
            method: s.method,
            mean_best_test_mse: s.mean_best_test_mse,
            std_best_test_mse: s.std_best_test_mse,
            improvement,
            mean_backprops,
            conflict_free_steps: s.runs.iter().map(|r| r.conflict_free_steps).sum(),
            aggregation_steps: s.runs.iter().map(|r| r.aggregation_steps).sum(),
            failed_seeds: s.failed_seeds.len(),
        });
    }
    super::output::write_comparison(&cfgs[0].out_dir, &rows)?;
    Ok(rows)
}
