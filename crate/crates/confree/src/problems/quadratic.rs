//! Convex quadratic loss suites with a known Lipschitz constant of the
//! summed gradient, for exercising the convergence theorems.

use super::Problem;
use crate::vecmath::Vector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `m` losses `L_i = (theta - c_i)^T A_i (theta - c_i) / 2` with
/// symmetric positive definite `A_i`.
pub struct QuadraticSuite {
    mats: Vec<DMatrix<f64>>,
    centers: Vec<DVector<f64>>,
    lipschitz: f64,
    backprops: u64,
}

/// Random suite: each `A_i = Q diag(lam) Q^T` with a random orthogonal
/// `Q` and eigenvalues in [0.5, 2.5]. The returned Lipschitz constant
/// is the top eigenvalue of `sum A_i`.
pub fn quadratic_suite(m: usize, k: usize, seed: u64) -> QuadraticSuite {
    assert!(m >= 1 && k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mats = Vec::with_capacity(m);
    let mut centers = Vec::with_capacity(m);
    for _ in 0..m {
        let gauss = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        let q = gauss.qr().q();
        let lambda = DVector::from_fn(k, |_, _| rng.gen_range(0.5..2.5));
        let a = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
        // Symmetrize away the last bits of round-off.
        let a = (&a + a.transpose()) * 0.5;
        mats.push(a);
        centers.push(DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let sum = mats.iter().fold(DMatrix::zeros(k, k), |acc, a| acc + a);
    let lipschitz = sum
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    QuadraticSuite {
        mats,
        centers,
        lipschitz,
        backprops: 0,
    }
}

impl QuadraticSuite {
    /// Lipschitz constant of the summed gradient, `lambda_max(sum A_i)`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Minimizer of the summed loss: `(sum A_i)^{-1} sum A_i c_i`.
    pub fn sum_minimizer(&self) -> Vector {
        let k = self.dim();
        let sum = self
            .mats
            .iter()
            .fold(DMatrix::zeros(k, k), |acc, a| acc + a);
        let rhs = self
            .mats
            .iter()
            .zip(&self.centers)
            .fold(DVector::zeros(k), |acc, (a, c)| acc + a * c);
        let sol = sum.lu().solve(&rhs).expect("SPD sum is invertible");
        Vector::from_vec(sol.data.into())
    }

    pub fn total_loss(&self, params: &Vector) -> f64 {
        (0..self.mats.len())
            .map(|i| self.loss_i(i, params))
            .sum()
    }

    fn loss_i(&self, i: usize, params: &Vector) -> f64 {
        let theta = DVector::from_column_slice(params.as_slice());
        let d = &theta - &self.centers[i];
        0.5 * (&self.mats[i] * &d).dot(&d)
    }

    fn grad_i(&self, i: usize, params: &Vector) -> Vector {
        let theta = DVector::from_column_slice(params.as_slice());
        let d = &theta - &self.centers[i];
        let g = &self.mats[i] * d;
        Vector::from_vec(g.data.into())
    }
}

impl Problem for QuadraticSuite {
    fn loss_names(&self) -> Vec<String> {
        (1..=self.mats.len()).map(|i| format!("quad_{i}")).collect()
    }

    fn param_count(&self) -> usize {
        self.dim()
    }

    fn init_params(&mut self, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vector::from_vec((0..self.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect())
    }

    fn loss_values(&mut self, params: &Vector) -> Vec<f64> {
        (0..self.mats.len()).map(|i| self.loss_i(i, params)).collect()
    }

    fn loss_gradient(&mut self, i: usize, params: &Vector) -> Vector {
        self.backprops += 1;
        self.grad_i(i, params)
    }

    fn sum_gradient(&mut self, params: &Vector) -> Vector {
        self.backprops += 1;
        let mut g = Vector::zeros(self.dim());
        for i in 0..self.mats.len() {
            g = g.add(&self.grad_i(i, params));
        }
        g
    }

    fn test_metric(&mut self, params: &Vector) -> f64 {
        self.total_loss(params)
    }

    fn backprops(&self) -> u64 {
        self.backprops
    }

    fn known_minimum(&self) -> Option<Vector> {
        Some(self.sum_minimizer())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power iteration on `sum A_i`, an oracle for the reported
    /// Lipschitz constant.
    fn power_iteration_lipschitz(suite: &QuadraticSuite) -> f64 {
        let k = suite.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let mut v = Vector::from_vec((0..k).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let zero = Vector::zeros(k);
        let mut lambda = 0.0;
        for _ in 0..8000 {
            // (sum A_i) v = sum grad_i(v + c_i) with centers cancelled:
            // use grads at shifted points to avoid exposing internals.
            let mut av = Vector::zeros(k);
            for i in 0..suite.mats.len() {
                let base = suite.grad_i(i, &zero);
                let at_v = suite.grad_i(i, &v);
                av = av.add(&at_v.sub(&base));
            }
            lambda = av.norm() / v.norm();
            v = av.scale(1.0 / av.norm());
        }
        lambda
    }

    #[test]
    fn identity_quadratic_boundary_step_preserves_loss() {
        // A = I, c = 0: L = 1, and the boundary step gamma = 2/L = 2
        // maps theta to -theta, preserving the loss exactly.
        let mut suite = quadratic_suite(1, 4, 0);
        suite.mats[0] = DMatrix::identity(4, 4);
        suite.centers[0] = DVector::zeros(4);
        suite.lipschitz = suite.mats[0].clone().symmetric_eigen().eigenvalues.max();
        assert!((suite.lipschitz - 1.0).abs() < 1e-12);

        let theta = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let before = suite.total_loss(&theta);
        let g = suite.grad_i(0, &theta); // single loss: update = gradient
        let mut stepped = theta.clone();
        stepped.axpy(-2.0 / suite.lipschitz, &g);
        assert_eq!(stepped.as_slice(), theta.scale(-1.0).as_slice());
        assert!((suite.total_loss(&stepped) - before).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_matches_power_iteration() {
        let suite = quadratic_suite(3, 12, 7);
        let oracle = power_iteration_lipschitz(&suite);
        assert!(
            (suite.lipschitz() - oracle).abs() < 1e-8 * suite.lipschitz(),
            "reported {}, oracle {}",
            suite.lipschitz(),
            oracle
        );
    }

    #[test]
    fn minimizer_zeroes_the_summed_gradient() {
        let mut suite = quadratic_suite(4, 8, 11);
        let min = suite.sum_minimizer();
        let g = suite.sum_gradient(&min);
        assert!(g.norm() < 1e-10, "gradient norm {}", g.norm());
    }

    #[test]
    fn losses_are_nonnegative_and_zero_at_center() {
        let mut suite = quadratic_suite(2, 6, 3);
        let c0 = Vector::from_vec(suite.centers[0].iter().cloned().collect());
        let vals = suite.loss_values(&c0);
        assert!(vals[0].abs() < 1e-18);
        assert!(vals[1] >= 0.0);
    }
}
