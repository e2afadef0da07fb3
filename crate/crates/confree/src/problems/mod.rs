//! Loss-set definitions: synthetic conflict landscapes, convex suites
//! for the convergence theorems, and PINN problems with ground-truth
//! evaluators.

mod fd_burgers;
mod pde;
mod pinn;
mod quadratic;
mod toy;

pub use fd_burgers::{fd_burgers_oracle, grid_convergence, BurgersField, FdError, BURGERS_NU};
pub use pde::{
    burgers_residual, kovasznay_analytic, kovasznay_analytic_fields, kovasznay_lambda,
    kovasznay_residuals, Arith, BurgersFields, KovasznayFields, PlainArith,
};
pub use pinn::{burgers_problem, kovasznay_problem, LossGrouping, PinnProblem, SampleCounts};
pub use quadratic::{quadratic_suite, QuadraticSuite};
pub use toy::{conflict_case_problem, imtlg_case_problem, toy_landscape, FixedGradients, ToyLandscape};

use crate::vecmath::Vector;

/// A set of named losses over a shared parameter vector, consumable by
/// every training method in the harness. Evaluators are deterministic
/// given (params, current sample batch); sampling is seeded.
pub trait Problem {
    fn loss_names(&self) -> Vec<String>;

    fn num_losses(&self) -> usize {
        self.loss_names().len()
    }

    fn param_count(&self) -> usize;

    /// Fresh parameter vector for a run with this seed.
    fn init_params(&mut self, seed: u64) -> Vector;

    /// Draw the sample batch for one iteration. Analytic problems are
    /// sample-free and ignore this.
    fn resample(&mut self, _iter: u64, _run_seed: u64) {}

    /// All loss values at `params` on the current batch (no backprop).
    fn loss_values(&mut self, params: &Vector) -> Vec<f64>;

    /// Gradient of loss `i`; one reverse-mode evaluation.
    fn loss_gradient(&mut self, i: usize, params: &Vector) -> Vector;

    /// Gradient of the summed loss; a single reverse-mode evaluation.
    fn sum_gradient(&mut self, params: &Vector) -> Vector;

    /// Scalar test metric against ground truth (lower is better).
    fn test_metric(&mut self, params: &Vector) -> f64;

    /// Cumulative reverse-mode evaluations.
    fn backprops(&self) -> u64;

    /// Shared minimizer, when the problem knows one analytically.
    fn known_minimum(&self) -> Option<Vector> {
        None
    }
}

/// Latin-hypercube sample: `n` points in the box given by `bounds`,
/// one stratum per point and dimension. Returns one column per
/// dimension, ready for batched tape inputs.
pub fn latin_hypercube(
    rng: &mut impl rand::Rng,
    n: usize,
    bounds: &[(f64, f64)],
) -> Vec<Vec<f64>> {
    use rand::seq::SliceRandom;
    let mut columns = Vec::with_capacity(bounds.len());
    for &(lo, hi) in bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let width = (hi - lo) / n as f64;
        let column = strata
            .into_iter()
            .map(|s| lo + (s as f64 + rng.gen::<f64>()) * width)
            .collect();
        columns.push(column);
    }
    columns
}

/// Seed for one PCGrad projection-order draw within a seeded run.
pub fn pcgrad_step_seed(run_seed: u64, iter: u64) -> u64 {
    mix_seed(run_seed, iter, 2)
}

/// Per-iteration sampling seed: decorrelates iterations and sample
/// groups within one seeded run.
pub(crate) fn mix_seed(run_seed: u64, iter: u64, tag: u64) -> u64 {
    let mut z = run_seed
        .wrapping_add(iter.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn latin_hypercube_covers_strata() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cols = latin_hypercube(&mut rng, 100, &[(-1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(cols.len(), 2);
        for (d, &(lo, hi)) in [(-1.0, 1.0), (0.0, 1.0)].iter().enumerate() {
            let mut seen = [false; 100];
            for &v in &cols[d] {
                assert!(v >= lo && v < hi);
                let stratum = ((v - lo) / (hi - lo) * 100.0) as usize;
                assert!(!seen[stratum], "duplicate stratum {stratum}");
                seen[stratum] = true;
            }
        }
    }

    #[test]
    fn mix_seed_changes_with_each_component() {
        let base = mix_seed(1, 2, 3);
        assert_ne!(base, mix_seed(2, 2, 3));
        assert_ne!(base, mix_seed(1, 3, 3));
        assert_ne!(base, mix_seed(1, 2, 4));
        assert_eq!(base, mix_seed(1, 2, 3));
    }
}
