//! Experiment configuration: a versioned TOML schema validated before
//! any training starts.

use crate::optimizers::AdamParams;
use crate::problems::LossGrouping;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    AdamSum,
    Config,
    MConfig,
    MaConfig,
    Pcgrad,
    Imtlg,
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodName::AdamSum => "adam-sum",
            MethodName::Config => "config",
            MethodName::MConfig => "m-config",
            MethodName::MaConfig => "ma-config",
            MethodName::Pcgrad => "pcgrad",
            MethodName::Imtlg => "imtlg",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Burgers,
    Kovasznay,
    Toy,
    Quadratic,
    ConflictCase,
    ImtlgCase,
}

impl std::fmt::Display for ProblemName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProblemName::Burgers => "burgers",
            ProblemName::Kovasznay => "kovasznay",
            ProblemName::Toy => "toy",
            ProblemName::Quadratic => "quadratic",
            ProblemName::ConflictCase => "conflict-case",
            ProblemName::ImtlgCase => "imtlg-case",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingName {
    Two,
    Three,
}

impl From<GroupingName> for LossGrouping {
    fn from(g: GroupingName) -> Self {
        match g {
            GroupingName::Two => LossGrouping::Two,
            GroupingName::Three => LossGrouping::Three,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_width")]
    pub width: usize,
}

fn default_hidden_layers() -> usize {
    3
}

fn default_width() -> usize {
    32
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_layers: default_hidden_layers(),
            width: default_width(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default = "default_interior")]
    pub interior: usize,
    #[serde(default = "default_boundary")]
    pub boundary: usize,
    #[serde(default = "default_boundary")]
    pub initial: usize,
}

fn default_interior() -> usize {
    2000
}

fn default_boundary() -> usize {
    100
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            interior: default_interior(),
            boundary: default_boundary(),
            initial: default_boundary(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_lr_initial")]
    pub initial: f64,
    #[serde(default = "default_lr_final", rename = "final")]
    pub final_rate: f64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Cosine
}

fn default_lr_initial() -> f64 {
    1e-3
}

fn default_lr_final() -> f64 {
    1e-4
}

fn default_warmup() -> u64 {
    100
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            initial: default_lr_initial(),
            final_rate: default_lr_final(),
            warmup: default_warmup(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_adam_eps(),
        }
    }
}

impl From<&AdamConfig> for AdamParams {
    fn from(c: &AdamConfig) -> Self {
        AdamParams {
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    #[serde(default = "default_quad_losses")]
    pub losses: usize,
    #[serde(default = "default_quad_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_quad_losses() -> usize {
    2
}

fn default_quad_dim() -> usize {
    32
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self {
            losses: default_quad_losses(),
            dim: default_quad_dim(),
            seed: 0,
        }
    }
}

/// One experiment: a problem, a method, and everything needed to make
/// the run reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; only 1 is understood.
    pub schema: u32,
    pub name: String,
    pub problem: ProblemName,
    pub method: MethodName,
    #[serde(default = "default_grouping")]
    pub grouping: GroupingName,
    pub iterations: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub samples: SampleConfig,
    #[serde(default)]
    pub lr: LrConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub quadratic: QuadraticConfig,
}

fn default_grouping() -> GroupingName {
    GroupingName::Two
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_eval_every() -> u64 {
    100
}

fn default_eps() -> f64 {
    crate::vecmath::EPS_DEFAULT
}

fn default_out_dir() -> String {
    "runs".into()
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.schema != 1 {
            problems.push(format!("unsupported schema {}", self.schema));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            problems.push("name must be non-empty and path-safe".into());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".into());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be positive".into());
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            problems.push("eps must be non-negative".into());
        }
        if !(self.lr.initial > 0.0 && self.lr.final_rate > 0.0) {
            problems.push("learning rates must be positive".into());
        }
        for (name, beta) in [("beta1", self.adam.beta1), ("beta2", self.adam.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                problems.push(format!("{name} must be in (0, 1)"));
            }
        }
        if matches!(
            self.problem,
            ProblemName::Burgers | ProblemName::Kovasznay
        ) {
            if self.network.hidden_layers == 0 || self.network.width == 0 {
                problems.push("PINN problems need a nonzero network".into());
            }
            if self.samples.interior == 0 || self.samples.boundary == 0 {
                problems.push("PINN problems need nonzero sample counts".into());
            }
            if matches!(self.problem, ProblemName::Burgers) && self.samples.initial == 0 {
                problems.push("the burgers problem needs initial samples".into());
            }
        }
        if matches!(self.problem, ProblemName::Quadratic)
            && (self.quadratic.losses == 0 || self.quadratic.dim == 0)
        {
            problems.push("quadratic suite needs losses >= 1 and dim >= 1".into());
        }
        if matches!(self.method, MethodName::Imtlg)
            && matches!(self.problem, ProblemName::Quadratic)
            && self.quadratic.losses < 2
        {
            problems.push("imtlg needs at least two losses".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }

    /// Canonical serialized form used for the content hash in meta.txt.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
