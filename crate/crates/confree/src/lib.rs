//! Conflict-free gradient aggregation for multi-objective training.
//!
//! The crate implements the ConFIG update operator and its
//! momentum-accelerated variant M-ConFIG, together with the PCGrad,
//! IMTL-G, and plain-sum baselines. A small reverse-mode autodiff tape
//! with closure under differentiation drives physics-informed network
//! losses (1D Burgers, 2D Kovasznay flow), and a seeded experiment
//! harness reproduces the method's structural guarantees as executable
//! properties.
//!
//! Layout:
//! - [`vecmath`]: dense vector primitives and the SVD least-squares solve
//! - [`aggregators`]: ConFIG, PCGrad, IMTL-G, sum, and solvability diagnostics
//! - [`optimizers`]: Adam, M-ConFIG (alternating momentum), MA-ConFIG ablation
//! - [`autodiff`]: batched scalar tape + fully connected network
//! - [`problems`]: synthetic landscapes, convex suites, PINN problems,
//!   and the finite-difference Burgers ground-truth solver
//! - [`harness`]: experiment configs, training loops, CSV output
//! - [`properties`]: the executable property suite shared by the CLI
//!   and the acceptance tests

pub mod aggregators;
pub mod autodiff;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod properties;
pub mod vecmath;

pub use aggregators::{AggregationResult, DirectionWeights};
pub use vecmath::{GradientSet, Vector, EPS_DEFAULT};
