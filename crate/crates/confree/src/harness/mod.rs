//! Experiment orchestration: validated configs, seeded training runs,
//! learning-rate schedules, metric logging, and CSV persistence.

mod config;
mod output;
mod runner;
mod schedule;

pub use config::{
    AdamConfig, ConfigError, ExperimentConfig, GroupingName, LrConfig, MethodName, NetworkConfig,
    ProblemName, QuadraticConfig, SampleConfig, ScheduleKind,
};
pub use output::{experiment_dir, parse_seed_csv, render_seed_csv};
pub use runner::{
    build_problem, compare_methods, relative_improvement, run_experiment, run_single_seed,
    thread_cap, ComparisonRow, ExperimentSummary, HarnessError, RunResult, TrainRecord,
};
pub use schedule::learning_rate;
