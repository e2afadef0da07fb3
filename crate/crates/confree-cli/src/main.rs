//! Command-line front end: run experiments, compare methods, validate
//! configs, materialize ground-truth grids, and execute the property
//! suite.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, bad or
//! missing configs, failed properties), 2 on runtime failures (solver
//! or I/O errors).

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use confree::harness::{
    compare_methods, run_experiment, ExperimentConfig, ExperimentSummary, HarnessError,
};
use confree::problems::{fd_burgers_oracle, grid_convergence, kovasznay_analytic, BURGERS_NU};
use confree::properties::{run_properties, PropertyOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "confree",
    about = "Conflict-free gradient aggregation experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write runs/<name>/ output.
    Run(RunArgs),
    /// Run several configs on one problem and tabulate them against
    /// the adam-sum baseline.
    Compare(CompareArgs),
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a ground-truth field as CSV and report grid convergence.
    Oracle(OracleArgs),
    /// Execute the property suite (conflict-freedom, equal projection,
    /// magnitude law, two-loss equivalence, failure vectors, descent
    /// monotonicity).
    Properties {
        /// Only run properties whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list with seeds 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Override the iteration count.
    #[arg(long)]
    iters: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seeds in parallel (capped by CONFIG_GRAD_THREADS).
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Config paths; repeat the flag for each method.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// burgers (finite-difference solve) or kovasznay (analytic).
    #[arg(long)]
    problem: String,
    /// Spatial resolution (x for burgers; x and y for kovasznay).
    #[arg(long, default_value_t = 512)]
    nx: usize,
    /// Temporal resolution for burgers; y resolution for kovasznay.
    #[arg(long, default_value_t = 2048)]
    nt: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Validate { config } => cmd_validate(config),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Properties { filter } => cmd_properties(filter.as_deref()),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_path(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(n) = args.seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(iters) = args.iters {
        cfg.iterations = iters;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
}

fn print_summary(summary: &ExperimentSummary) {
    println!(
        "experiment {} ({} / {})",
        summary.name, summary.problem, summary.method
    );
    println!("seed,best_test_mse,best_iteration,backprops,failed");
    for run in &summary.runs {
        println!(
            "{},{},{},{},{}",
            run.seed, run.best_test_mse, run.best_iteration, run.final_backprops, run.failed
        );
    }
    println!(
        "mean_best_test_mse = {} ± {}",
        summary.mean_best_test_mse, summary.std_best_test_mse
    );
    if !summary.failed_seeds.is_empty() {
        println!("failed seeds (NaN): {:?}", summary.failed_seeds);
    }
}

fn harness_exit(e: &HarnessError) -> ExitCode {
    match e {
        HarnessError::Config(_) | HarnessError::Mismatch(_) | HarnessError::NonPositiveBaseline(_) => {
            ExitCode::from(EXIT_VALIDATION)
        }
        HarnessError::Io { .. } => ExitCode::from(EXIT_RUNTIME),
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    apply_overrides(&mut cfg, &args);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run_experiment(&cfg, args.parallel) {
        Ok(summary) => {
            print_summary(&summary);
            println!(
                "wrote {}",
                confree::harness::experiment_dir(&cfg).display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            harness_exit(&e)
        }
    }
}

fn cmd_compare(args: CompareArgs) -> ExitCode {
    let mut cfgs = Vec::with_capacity(args.config.len());
    for path in &args.config {
        match load_config(path) {
            Ok(mut cfg) => {
                if let Some(out) = &args.out {
                    cfg.out_dir = out.display().to_string();
                }
                cfgs.push(cfg);
            }
            Err(code) => return code,
        }
    }
    match compare_methods(&cfgs, args.parallel) {
        Ok(rows) => {
            println!(
                "name,method,mean_best_test_mse,std_best_test_mse,improvement_vs_baseline_pct,\
                 conflict_free_steps,aggregation_steps,failed_seeds"
            );
            for r in &rows {
                println!(
                    "{},{},{},{},{},{},{},{}",
                    r.name,
                    r.method,
                    r.mean_best_test_mse,
                    r.std_best_test_mse,
                    r.improvement,
                    r.conflict_free_steps,
                    r.aggregation_steps,
                    r.failed_seeds
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            harness_exit(&e)
        }
    }
}

fn cmd_validate(config: PathBuf) -> ExitCode {
    match load_config(&config) {
        Ok(cfg) => {
            println!("ok: {} ({} / {})", cfg.name, cfg.problem, cfg.method);
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn write_out(path: &PathBuf, contents: &str) -> Result<(), ExitCode> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                eprintln!("error: cannot create {}: {e}", parent.display());
                return Err(ExitCode::from(EXIT_RUNTIME));
            }
        }
    }
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitCode::from(EXIT_RUNTIME)
    })
}

fn cmd_oracle(args: OracleArgs) -> ExitCode {
    match args.problem.as_str() {
        "burgers" => {
            let field = match fd_burgers_oracle(args.nx, args.nt, BURGERS_NU) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            // Cap exported time slices so huge solves stay plottable.
            let t_step = (args.nt / 256).max(1);
            let mut csv = String::from("x,t,u\n");
            for it in (0..=args.nt).step_by(t_step) {
                let slice = field.slice(it);
                let t = field.t_coord(it);
                for (ix, u) in slice.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", field.x_coord(ix), t, u));
                }
            }
            if let Err(code) = write_out(&args.out, &csv) {
                return code;
            }
            match grid_convergence(args.nx, args.nt, BURGERS_NU) {
                Ok(change) => {
                    let verdict = if change < 1e-3 { "converged" } else { "NOT converged" };
                    println!(
                        "refinement {}x{} -> {}x{}: relative L2 change {change:.3e} ({verdict}, \
                         threshold 1e-3)",
                        args.nx,
                        args.nt,
                        2 * args.nx,
                        2 * args.nt
                    );
                }
                Err(e) => {
                    eprintln!("error during refinement check: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            println!("wrote {}", args.out.display());
            ExitCode::SUCCESS
        }
        "kovasznay" => {
            let nu = 1.0 / 40.0;
            let mut csv = String::from("x,y,u,v,p\n");
            for iy in 0..=args.nt {
                let y = -0.5 + 2.0 * iy as f64 / args.nt as f64;
                for ix in 0..=args.nx {
                    let x = -0.5 + 1.5 * ix as f64 / args.nx as f64;
                    let [u, v, p] = kovasznay_analytic(nu, x, y);
                    csv.push_str(&format!("{x},{y},{u},{v},{p}\n"));
                }
            }
            if let Err(code) = write_out(&args.out, &csv) {
                return code;
            }
            println!("wrote {} (analytic, Re = 40)", args.out.display());
            ExitCode::SUCCESS
        }
        other => {
            eprintln!("error: unknown oracle problem '{other}' (use burgers or kovasznay)");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn cmd_properties(filter: Option<&str>) -> ExitCode {
    // Hidden negative-control hook used by the test suite: flips the
    // sign of every aggregated update inside the property runs.
    let sabotage = std::env::var("CONFIG_GRAD_SABOTAGE").is_ok_and(|v| v == "1");
    let outcomes = run_properties(filter, PropertyOptions { sabotage });
    if outcomes.is_empty() {
        eprintln!("error: no property matches filter");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let mut all_passed = true;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", o.name, o.detail);
        all_passed &= o.passed;
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}
