//! CSV and metadata persistence. All output is UTF-8 with `\n` line
//! endings; floats use Rust's shortest round-trip formatting so
//! identical runs produce identical bytes.

use super::config::ExperimentConfig;
use super::runner::{ComparisonRow, ExperimentSummary, HarnessError, RunResult, TrainRecord};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn experiment_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.out_dir).join(&cfg.name)
}

/// `seed<i>.csv` body: `iteration,loss_1..loss_m,test_mse,backprops`.
pub fn render_seed_csv(run: &RunResult, num_losses: usize) -> String {
    let mut out = String::from("iteration");
    for i in 1..=num_losses {
        let _ = write!(out, ",loss_{i}");
    }
    out.push_str(",test_mse,backprops\n");
    for rec in &run.records {
        let _ = write!(out, "{}", rec.iteration);
        for l in &rec.losses {
            let _ = write!(out, ",{l}");
        }
        let _ = writeln!(out, ",{},{}", rec.test_mse, rec.backprops);
    }
    out
}

/// Parse a seed CSV back into records (used to check that summaries
/// recompute exactly from the raw files).
pub fn parse_seed_csv(text: &str, seed: u64) -> Vec<TrainRecord> {
    let mut lines = text.lines();
    let header = lines.next().expect("header line");
    let cols = header.split(',').count();
    let num_losses = cols - 3;
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), cols, "ragged csv row");
            TrainRecord {
                iteration: fields[0].parse().expect("iteration"),
                losses: fields[1..1 + num_losses]
                    .iter()
                    .map(|f| f.parse().expect("loss"))
                    .collect(),
                test_mse: fields[1 + num_losses].parse().expect("test_mse"),
                backprops: fields[2 + num_losses].parse().expect("backprops"),
                seed,
            }
        })
        .collect()
}

fn render_summary_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::from(
        "name,problem,method,seed,best_test_mse,best_iteration,backprops,failed,\
         wall_seconds_machine_dependent\n",
    );
    for run in &summary.runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.3}",
            summary.name,
            summary.problem,
            summary.method,
            run.seed,
            run.best_test_mse,
            run.best_iteration,
            run.final_backprops,
            run.failed,
            run.wall_seconds
        );
    }
    let _ = writeln!(
        out,
        "{},{},{},mean±std,{}±{},,,,",
        summary.name,
        summary.problem,
        summary.method,
        summary.mean_best_test_mse,
        summary.std_best_test_mse
    );
    out
}

fn render_meta(cfg: &ExperimentConfig) -> String {
    let canonical = cfg.canonical_toml();
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    format!("# config echo\n{canonical}\n# content hash\nsha256 = \"{hex}\"\n")
}

pub fn write_experiment(
    cfg: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<(), HarnessError> {
    let dir = experiment_dir(cfg);
    for run in &summary.runs {
        let path = dir.join(format!("seed{}.csv", run.seed));
        write_file(&path, &render_seed_csv(run, summary.loss_names.len()))?;
    }
    write_file(&dir.join("summary.csv"), &render_summary_csv(summary))?;
    write_file(&dir.join("meta.txt"), &render_meta(cfg))?;
    Ok(())
}

pub fn write_comparison(out_dir: &str, rows: &[ComparisonRow]) -> Result<(), HarnessError> {
    let mut out = String::from(
        "name,method,mean_best_test_mse,std_best_test_mse,improvement_vs_baseline_pct,\
         mean_backprops,conflict_free_steps,aggregation_steps,failed_seeds\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.name,
            r.method,
            r.mean_best_test_mse,
            r.std_best_test_mse,
            r.improvement,
            r.mean_backprops,
            r.conflict_free_steps,
            r.aggregation_steps,
            r.failed_seeds
        );
    }
    write_file(&Path::new(out_dir).join("comparison.csv"), &out)
}
