//! Aggregation of loss-specific gradients into a single update vector.
//!
//! - [`config_update`]: the conflict-free inverse-gradients operator.
//!   With default weights the update has equal cosine similarity to
//!   every nonzero gradient and its magnitude equals the sum of the
//!   projection lengths.
//! - [`config_update_two`]: the two-loss closed form built from
//!   orthogonal components; agrees with the pseudoinverse form.
//! - [`pcgrad_update`]: projection onto normal planes of conflicting
//!   gradients in a seeded random order. Conflict-free only for m = 2.
//! - [`imtlg_update`]: weights chosen so the update has equal
//!   projection length on each unitized gradient (sign not guaranteed
//!   for m >= 3).
//! - [`sum_update`]: the plain-sum baseline.

use crate::vecmath::{
    cosine_similarity, least_squares_solve, numerical_rank, orthogonal_component, unitize,
    GradientSet, VecmathError, Vector,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Relative tolerance used by the `conflict_free` diagnostic flag;
/// absorbs f64 SVD noise.
pub const CONFLICT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AggregatorError {
    #[error("at least {needed} losses are required, got {got}")]
    TooFewLosses { needed: usize, got: usize },
    #[error("direction weights must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error(transparent)]
    Vecmath(#[from] VecmathError),
}

/// Positive per-loss direction weights. The ratio of the final
/// update's projections onto two gradients equals the ratio of their
/// weights; the all-ones default gives a uniform decrease rate.
#[derive(Debug, Clone)]
pub struct DirectionWeights {
    components: Vec<f64>,
}

impl DirectionWeights {
    pub fn uniform(m: usize) -> Self {
        Self {
            components: vec![1.0; m],
        }
    }

    pub fn new(components: Vec<f64>) -> Result<Self, AggregatorError> {
        if components.is_empty() {
            return Err(AggregatorError::TooFewLosses { needed: 1, got: 0 });
        }
        for &w in &components {
            if w.is_nan() || w <= 0.0 || w.is_infinite() {
                return Err(AggregatorError::NonPositiveWeight(w));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }
}

/// Update vector plus per-loss diagnostics.
#[derive(Debug, Clone)]
pub struct AggregationResult {
    /// The aggregated update direction (gradient-like: descend along
    /// `-update`).
    pub update: Vector,
    /// `S_c(g_i, update)` for each loss.
    pub per_loss_cosine: Vec<f64>,
    /// `g_i . U(update)` for each loss (projection lengths).
    pub per_loss_projection: Vec<f64>,
    /// `|update|`.
    pub magnitude: f64,
    /// True iff `min_i g_i . update >= -1e-9 |g_i||update|`.
    pub conflict_free: bool,
    /// Max-norm residual of the conflict-free linear system, when one
    /// was solved. Large values mean no conflict-free direction exists
    /// (more losses than parameter dimensions, or dependent rows) and
    /// the least-squares direction was returned instead.
    pub lsq_residual: Option<f64>,
}

fn diagnostics(
    grads: &GradientSet,
    update: Vector,
    eps: f64,
    lsq_residual: Option<f64>,
) -> AggregationResult {
    let magnitude = update.norm();
    let unit = unitize(&update, eps);
    let mut per_loss_cosine = Vec::with_capacity(grads.num_losses());
    let mut per_loss_projection = Vec::with_capacity(grads.num_losses());
    let mut conflict_free = true;
    for g in grads.rows() {
        per_loss_cosine.push(cosine_similarity(g, &update, eps).expect("dims checked"));
        per_loss_projection.push(g.dot(&unit));
        if g.dot(&update) < -CONFLICT_TOL * g.norm() * magnitude {
            conflict_free = false;
        }
    }
    AggregationResult {
        update,
        per_loss_cosine,
        per_loss_projection,
        magnitude,
        conflict_free,
        lsq_residual,
    }
}

/// The ConFIG operator: `g_u = U(pinv([U(g_1)..U(g_m)]^T) w)` followed
/// by rescaling to the sum of projection lengths,
/// `update = (sum_i g_i . g_u) g_u`.
///
/// Zero gradients are treated as converged losses: they are dropped
/// from the unitized matrix before the pseudoinverse (their projection
/// terms contribute zero to the magnitude either way). If every
/// gradient is zero the update is zero and trivially conflict-free.
pub fn config_update(
    grads: &GradientSet,
    weights: &DirectionWeights,
    eps: f64,
) -> Result<AggregationResult, AggregatorError> {
    let m = grads.num_losses();
    if weights.components().len() != m {
        return Err(AggregatorError::Vecmath(VecmathError::DimensionMismatch {
            left: weights.components().len(),
            right: m,
        }));
    }
    if !grads.solvable_guarantee() {
        log::warn!(
            "ConFIG: {} losses in a {}-dimensional space; the conflict-free \
             guarantee may fail (returning the least-squares direction)",
            m,
            grads.dim()
        );
    }

    let mut unit_rows = Vec::with_capacity(m);
    let mut active_weights = Vec::with_capacity(m);
    for (g, &w) in grads.rows().iter().zip(weights.components()) {
        if g.norm() > 0.0 {
            unit_rows.push(unitize(g, eps));
            active_weights.push(w);
        }
    }
    if unit_rows.is_empty() {
        let update = Vector::zeros(grads.dim());
        return Ok(diagnostics(grads, update, eps, None));
    }

    let x = least_squares_solve(&unit_rows, &active_weights);
    let residual = unit_rows
        .iter()
        .zip(&active_weights)
        .map(|(row, &w)| (row.dot(&x) - w).abs())
        .fold(0.0, f64::max);

    let g_u = unitize(&x, eps);
    let scale: f64 = grads.rows().iter().map(|g| g.dot(&g_u)).sum();
    let update = g_u.scale(scale);
    Ok(diagnostics(grads, update, eps, Some(residual)))
}

/// Two-loss closed form of ConFIG, no pseudoinverse:
/// `g_v = U(U(O(g1,g2)) + U(O(g2,g1)))`,
/// `update = (g1.g_v + g2.g_v) g_v`.
///
/// Exactly parallel gradients make both orthogonal components vanish;
/// the update falls back to `g1 + g2` (the shared direction).
pub fn config_update_two(g1: &Vector, g2: &Vector, eps: f64) -> AggregationResult {
    let grads = GradientSet::new(vec![g1.clone(), g2.clone()]).expect("two rows");
    let o12 = orthogonal_component(g1, g2);
    let o21 = orthogonal_component(g2, g1);
    if o12.norm() <= 1e-14 * g2.norm() && o21.norm() <= 1e-14 * g1.norm() {
        let update = g1.add(g2);
        return diagnostics(&grads, update, eps, None);
    }
    let g_v = unitize(&unitize(&o12, eps).add(&unitize(&o21, eps)), eps);
    let scale = g1.dot(&g_v) + g2.dot(&g_v);
    diagnostics(&grads, g_v.scale(scale), eps, None)
}

/// PCGrad with an explicit projection order per loss: `orders[i]` is
/// the sequence of indices `j` against which `g_i` is checked. The
/// seeded entry point [`pcgrad_update`] shuffles these orders.
pub fn pcgrad_update_ordered(
    grads: &GradientSet,
    orders: &[Vec<usize>],
    eps: f64,
) -> AggregationResult {
    assert_eq!(orders.len(), grads.num_losses());
    let mut sum = Vector::zeros(grads.dim());
    for (i, order) in orders.iter().enumerate() {
        let mut hat = grads.row(i).clone();
        for &j in order {
            if j != i && hat.dot(grads.row(j)) < 0.0 {
                hat = orthogonal_component(grads.row(j), &hat);
            }
        }
        sum = sum.add(&hat);
    }
    diagnostics(grads, sum, eps, None)
}

/// PCGrad: each gradient is projected onto the normal plane of every
/// gradient it conflicts with, visiting the others in a seeded random
/// order, and the projected gradients are summed. Not guaranteed
/// conflict-free for m >= 3.
pub fn pcgrad_update(grads: &GradientSet, rng_seed: u64, eps: f64) -> AggregationResult {
    let m = grads.num_losses();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let orders: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut js: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            js.shuffle(&mut rng);
            js
        })
        .collect();
    pcgrad_update_ordered(grads, &orders, eps)
}

/// IMTL-G: `update = sum_i alpha_i g_i` with the tail weights solving
/// `alpha_tail (D U^T) = g_1 U^T` and `alpha_1 = 1 - sum(tail)`,
/// where `U^T` stacks `U(g_1) - U(g_i)` and `D` stacks `g_1 - g_i`.
/// The equal-projection system is solved in the least-squares sense,
/// so a singular system degrades gracefully (with a log diagnostic)
/// instead of erroring.
pub fn imtlg_update(grads: &GradientSet, eps: f64) -> Result<AggregationResult, AggregatorError> {
    let m = grads.num_losses();
    if m < 2 {
        return Err(AggregatorError::TooFewLosses { needed: 2, got: m });
    }
    let g1 = grads.row(0);
    let u1 = unitize(g1, eps);
    // Columns of U^T and D^T, i.e. rows of U and D.
    let u_cols: Vec<Vector> = grads.rows()[1..]
        .iter()
        .map(|g| u1.sub(&unitize(g, eps)))
        .collect();
    let d_rows: Vec<Vector> = grads.rows()[1..].iter().map(|g| g1.sub(g)).collect();

    // System: alpha_tail . (D U^T) = g_1 . U^T, transposed into
    // (D U^T)^T alpha_tail^T = (g_1 U^T)^T for the solver.
    let n = m - 1;
    let mut system_rows = Vec::with_capacity(n);
    for col in &u_cols {
        let row: Vec<f64> = d_rows.iter().map(|d| d.dot(col)).collect();
        system_rows.push(Vector::from_vec(row));
    }
    let rhs: Vec<f64> = u_cols.iter().map(|c| g1.dot(c)).collect();
    if numerical_rank(&system_rows) < n {
        log::warn!("IMTL-G: singular equal-projection system; using the least-squares weights");
    }
    let alpha_tail = least_squares_solve(&system_rows, &rhs);

    let mut alpha = Vec::with_capacity(m);
    alpha.push(1.0 - alpha_tail.as_slice().iter().sum::<f64>());
    alpha.extend_from_slice(alpha_tail.as_slice());

    let mut update = Vector::zeros(grads.dim());
    for (a, g) in alpha.iter().zip(grads.rows()) {
        update.axpy(*a, g);
    }
    Ok(diagnostics(grads, update, eps, None))
}

/// The plain-sum baseline: `update = sum_i g_i`.
pub fn sum_update(grads: &GradientSet, eps: f64) -> AggregationResult {
    let mut sum = Vector::zeros(grads.dim());
    for g in grads.rows() {
        sum = sum.add(g);
    }
    diagnostics(grads, sum, eps, None)
}

/// Existence diagnostic for the conflict-free linear system
/// `[U(g_1)..U(g_m)]^T x = 1_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvabilityReport {
    pub num_losses: usize,
    pub dim: usize,
    /// Numerical rank of the unitized gradient matrix.
    pub rank: usize,
    /// True iff the system is guaranteed solvable: full row rank and
    /// no more losses than parameter dimensions.
    pub guaranteed: bool,
}

pub fn solvability_report(grads: &GradientSet, eps: f64) -> SolvabilityReport {
    let unit_rows: Vec<Vector> = grads.rows().iter().map(|g| unitize(g, eps)).collect();
    let rank = numerical_rank(&unit_rows);
    let m = grads.num_losses();
    let k = grads.dim();
    SolvabilityReport {
        num_losses: m,
        dim: k,
        rank,
        guaranteed: rank == m && m <= k,
    }
}
