//! Stateful training-step engines.
//!
//! [`Adam`] consumes an already-aggregated gradient (from any
//! aggregator, or the plain sum). [`MConfig`] backpropagates a single
//! loss per step and aggregates bias-corrected per-loss first momenta
//! with the ConFIG operator; a pseudo first momentum and a single
//! second momentum reconstruct Adam-style rescaling from an estimated
//! gradient. [`MaConfig`] is the ablation variant that keeps per-loss
//! second momenta and rescales before aggregating; it is provided for
//! reproducing its instability, not for use.

use crate::aggregators::{config_update, AggregatorError, DirectionWeights};
use crate::vecmath::{GradientSet, Vector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("loss index {index} out of range (m = {m})")]
    LossIndexOutOfRange { index: usize, m: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Aggregator(#[from] AggregatorError),
}

/// Shared Adam hyperparameters. Defaults: beta1 = 0.9, beta2 = 0.999,
/// epsilon = 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    fn validate(&self) {
        assert!(self.beta1 > 0.0 && self.beta1 < 1.0, "beta1 in (0,1)");
        assert!(self.beta2 > 0.0 && self.beta2 < 1.0, "beta2 in (0,1)");
        assert!(self.epsilon > 0.0);
    }
}

/// Adam with bias correction over any aggregated gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    params: AdamParams,
    m: Vector,
    v: Vector,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, params: AdamParams) -> Self {
        params.validate();
        Self {
            lr,
            params,
            m: Vector::zeros(dim),
            v: Vector::zeros(dim),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update along the aggregated gradient `g_c`. Leaves the
    /// state untouched if `g_c` is non-finite.
    pub fn step(&mut self, g_c: &Vector, theta: &mut Vector) -> Result<(), OptimError> {
        if !g_c.is_finite() {
            return Err(OptimError::NonFiniteGradient);
        }
        if g_c.dim() != theta.dim() || g_c.dim() != self.m.dim() {
            return Err(OptimError::DimensionMismatch {
                expected: self.m.dim(),
                got: g_c.dim(),
            });
        }
        self.t += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        let g = g_c.as_slice();
        let th = theta.as_mut_slice();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            th[i] -= self.lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Plain gradient-descent step along an update direction.
pub fn sgd_step(theta: &mut Vector, update: &Vector, gamma: f64) {
    theta.axpy(-gamma, update);
}

/// M-ConFIG state: per-loss first momenta with individual step
/// counters, one pseudo first momentum, and one second momentum.
///
/// The caller drives the round-robin schedule (loss `t % m` at global
/// step `t`, counting from 1) and supplies exactly one fresh gradient
/// per step.
#[derive(Debug, Clone)]
pub struct MConfig {
    pub lr: f64,
    pub eps: f64,
    params: AdamParams,
    per_loss_m: Vec<Vector>,
    per_loss_t: Vec<u64>,
    pseudo_m: Vector,
    v: Vector,
    t: u64,
}

impl MConfig {
    pub fn new(num_losses: usize, dim: usize, lr: f64, eps: f64, params: AdamParams) -> Self {
        params.validate();
        assert!(num_losses >= 1);
        Self {
            lr,
            eps,
            params,
            per_loss_m: vec![Vector::zeros(dim); num_losses],
            per_loss_t: vec![0; num_losses],
            pseudo_m: Vector::zeros(dim),
            v: Vector::zeros(dim),
            t: 0,
        }
    }

    pub fn num_losses(&self) -> usize {
        self.per_loss_m.len()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn per_loss_step_counts(&self) -> &[u64] {
        &self.per_loss_t
    }

    /// One M-ConFIG step: update the first momentum of loss `i` with
    /// its fresh gradient, bias-correct every visited momentum,
    /// aggregate them with the ConFIG operator, reconstruct the
    /// estimated gradient, refresh the pseudo first and the second
    /// momentum, and apply the Adam-style parameter update.
    pub fn step(
        &mut self,
        loss_index: usize,
        g_i: &Vector,
        theta: &mut Vector,
    ) -> Result<(), OptimError> {
        let m = self.per_loss_m.len();
        if loss_index >= m {
            return Err(OptimError::LossIndexOutOfRange {
                index: loss_index,
                m,
            });
        }
        if !g_i.is_finite() {
            return Err(OptimError::NonFiniteGradient);
        }
        if g_i.dim() != theta.dim() || g_i.dim() != self.v.dim() {
            return Err(OptimError::DimensionMismatch {
                expected: self.v.dim(),
                got: g_i.dim(),
            });
        }
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;

        self.t += 1;
        self.per_loss_t[loss_index] += 1;
        {
            let slot = &mut self.per_loss_m[loss_index];
            for (s, g) in slot.as_mut_slice().iter_mut().zip(g_i.as_slice()) {
                *s = beta1 * *s + (1.0 - beta1) * g;
            }
        }

        // Bias-correct each momentum with its own counter. Momenta of
        // never-visited losses stay excluded: their correction divides
        // by 1 - beta1^0 = 0. With the round-robin schedule every loss
        // has been visited after the first m steps.
        let visited: Vec<Vector> = self
            .per_loss_m
            .iter()
            .zip(&self.per_loss_t)
            .filter(|(_, &t_i)| t_i > 0)
            .map(|(m_i, &t_i)| m_i.scale(1.0 / (1.0 - beta1.powi(t_i as i32))))
            .collect();
        let grads = GradientSet::new(visited).expect("at least the current loss is visited");
        let agg = config_update(&grads, &DirectionWeights::uniform(grads.num_losses()), self.eps)?;
        let m_hat_g = agg.update;

        // Estimated gradient that would have produced m_hat_g through
        // a standard Adam first-momentum update.
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let pm = self.pseudo_m.as_mut_slice();
        let v = self.v.as_mut_slice();
        let mh = m_hat_g.as_slice();
        let th = theta.as_mut_slice();
        for i in 0..mh.len() {
            let g_c = (mh[i] * bc1 - beta1 * pm[i]) / (1.0 - beta1);
            pm[i] = beta1 * pm[i] + (1.0 - beta1) * g_c;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g_c * g_c;
            let v_hat = v[i] / bc2;
            th[i] -= self.lr * mh[i] / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// MA-ConFIG ablation state: per-loss first *and* second momenta. Each
/// step rescales the visited momenta Adam-style and feeds the rescaled
/// vectors to the ConFIG operator.
#[derive(Debug, Clone)]
pub struct MaConfig {
    pub lr: f64,
    pub eps: f64,
    params: AdamParams,
    per_loss_m: Vec<Vector>,
    per_loss_v: Vec<Vector>,
    per_loss_t: Vec<u64>,
    t: u64,
}

impl MaConfig {
    pub fn new(num_losses: usize, dim: usize, lr: f64, eps: f64, params: AdamParams) -> Self {
        params.validate();
        assert!(num_losses >= 1);
        Self {
            lr,
            eps,
            params,
            per_loss_m: vec![Vector::zeros(dim); num_losses],
            per_loss_v: vec![Vector::zeros(dim); num_losses],
            per_loss_t: vec![0; num_losses],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn per_loss_step_counts(&self) -> &[u64] {
        &self.per_loss_t
    }

    pub fn step(
        &mut self,
        loss_index: usize,
        g_i: &Vector,
        theta: &mut Vector,
    ) -> Result<(), OptimError> {
        let m = self.per_loss_m.len();
        if loss_index >= m {
            return Err(OptimError::LossIndexOutOfRange {
                index: loss_index,
                m,
            });
        }
        if !g_i.is_finite() {
            return Err(OptimError::NonFiniteGradient);
        }
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;

        self.t += 1;
        self.per_loss_t[loss_index] += 1;
        {
            let ms = self.per_loss_m[loss_index].as_mut_slice();
            let vs = self.per_loss_v[loss_index].as_mut_slice();
            for (i, g) in g_i.as_slice().iter().enumerate() {
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
            }
        }

        let mut rescaled = Vec::new();
        for i in 0..m {
            let t_i = self.per_loss_t[i];
            if t_i == 0 {
                continue;
            }
            let bc1 = 1.0 - beta1.powi(t_i as i32);
            let bc2 = 1.0 - beta2.powi(t_i as i32);
            let data: Vec<f64> = self.per_loss_m[i]
                .as_slice()
                .iter()
                .zip(self.per_loss_v[i].as_slice())
                .map(|(&mi, &vi)| (mi / bc1) / ((vi / bc2).sqrt() + epsilon))
                .collect();
            let hat = Vector::from_vec(data);
            if !hat.is_finite() {
                // Training failure mode of this variant: abort the
                // step and report instead of feeding NaN to the SVD.
                return Err(OptimError::NonFiniteGradient);
            }
            rescaled.push(hat);
        }
        let grads = GradientSet::new(rescaled).expect("at least one visited");
        let agg = config_update(&grads, &DirectionWeights::uniform(grads.num_losses()), self.eps)?;
        theta.axpy(-self.lr, &agg.update);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::EPS_DEFAULT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adam_first_step_is_lr_sized() {
        for c in [1.5, -0.2] {
            let mut adam = Adam::new(4, 1e-2, AdamParams::default());
            let g = Vector::from_vec(vec![c; 4]);
            let mut theta = Vector::zeros(4);
            adam.step(&g, &mut theta).unwrap();
            for &x in theta.as_slice() {
                // Magnitude ~ lr, direction -sign(c).
                assert!((x + c.signum() * 1e-2).abs() < 1e-6, "x = {x}");
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut adam = Adam::new(3, 1e-2, AdamParams::default());
        let mut theta = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let before = theta.clone();
        for _ in 0..10 {
            adam.step(&Vector::zeros(3), &mut theta).unwrap();
        }
        assert_eq!(theta, before);
    }

    #[test]
    fn adam_rejects_non_finite_and_keeps_state() {
        let mut adam = Adam::new(2, 1e-2, AdamParams::default());
        let mut theta = Vector::from_vec(vec![1.0, 1.0]);
        let bad = Vector::from_vec(vec![f64::NAN, 0.0]);
        assert!(adam.step(&bad, &mut theta).is_err());
        assert_eq!(adam.step_count(), 0);
        assert_eq!(theta.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut theta =
            Vector::from_vec((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut adam = Adam::new(8, 1e-2, AdamParams::default());
        let mut norms = Vec::new();
        for step in 0..1000 {
            let g = theta.scale(2.0); // grad of |x|^2
            adam.step(&g, &mut theta).unwrap();
            if step >= 100 && step % 100 == 0 {
                norms.push(theta.norm());
            }
        }
        for pair in norms.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
        }
        assert!(theta.norm() < 1e-2);
    }

    #[test]
    fn mconfig_single_loss_matches_adam() {
        // With one loss the ConFIG operator is the identity and
        // Algorithm 1 collapses to Adam.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 6;
        let mut theta_a = Vector::from_vec((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut theta_b = theta_a.clone();
        let mut adam = Adam::new(dim, 1e-3, AdamParams::default());
        let mut mconf = MConfig::new(1, dim, 1e-3, EPS_DEFAULT, AdamParams::default());
        for _ in 0..200 {
            let g = Vector::from_vec(
                theta_a
                    .as_slice()
                    .iter()
                    .map(|&x| 2.0 * x + 0.1)
                    .collect(),
            );
            adam.step(&g, &mut theta_a).unwrap();
            let g = Vector::from_vec(
                theta_b
                    .as_slice()
                    .iter()
                    .map(|&x| 2.0 * x + 0.1)
                    .collect(),
            );
            mconf.step(0, &g, &mut theta_b).unwrap();
        }
        let diff = theta_a.sub(&theta_b).norm() / theta_a.norm().max(1e-12);
        assert!(diff < 1e-6, "trajectories diverged: rel diff {diff}");
    }

    #[test]
    fn mconfig_counter_law() {
        let dim = 4;
        let m = 3;
        let mut mconf = MConfig::new(m, dim, 1e-3, EPS_DEFAULT, AdamParams::default());
        let mut theta = Vector::zeros(dim);
        let g = Vector::from_vec(vec![1.0; dim]);
        for t in 1..=20u64 {
            let i = (t % m as u64) as usize;
            mconf.step(i, &g, &mut theta).unwrap();
            let total: u64 = mconf.per_loss_step_counts().iter().sum();
            assert_eq!(total, mconf.step_count());
            assert_eq!(total, t);
        }
    }

    #[test]
    fn mconfig_identical_gradients_conflict_free() {
        let dim = 5;
        let g = Vector::from_vec(vec![0.5; dim]);
        let mut mconf = MConfig::new(2, dim, 1e-3, EPS_DEFAULT, AdamParams::default());
        let mut theta = Vector::zeros(dim);
        for t in 1..=10u64 {
            let i = (t % 2) as usize;
            let before = theta.clone();
            mconf.step(i, &g, &mut theta).unwrap();
            // Constant positive gradient: every coordinate moves down.
            for (a, b) in theta.as_slice().iter().zip(before.as_slice()) {
                assert!(a < b);
            }
        }
    }

    #[test]
    fn mconfig_rejects_bad_index() {
        let mut mconf = MConfig::new(2, 3, 1e-3, EPS_DEFAULT, AdamParams::default());
        let mut theta = Vector::zeros(3);
        let g = Vector::zeros(3);
        assert!(matches!(
            mconf.step(2, &g, &mut theta),
            Err(OptimError::LossIndexOutOfRange { index: 2, m: 2 })
        ));
    }

    #[test]
    fn maconfig_single_loss_behaves_like_adam_direction() {
        let dim = 4;
        let mut ma = MaConfig::new(1, dim, 1e-2, EPS_DEFAULT, AdamParams::default());
        let mut theta = Vector::zeros(dim);
        let g = Vector::from_vec(vec![2.0; dim]);
        ma.step(0, &g, &mut theta).unwrap();
        for &x in theta.as_slice() {
            assert!(x < 0.0);
        }
    }

    #[test]
    fn theorem2_proxy_best_seen_gradient_norm_decreases() {
        // Non-convex two-loss landscape (bowl + cosine ladder): plain
        // descent along the conflict-free update with step 2/L drives
        // the best-seen summed-gradient norm down across checkpoints.
        use crate::aggregators::{config_update, DirectionWeights};
        use crate::problems::{toy_landscape, Problem};
        use crate::vecmath::GradientSet;

        let mut toy = toy_landscape();
        let gamma = 2.0 / toy.lipschitz_bound();
        let mut theta = toy.init_params(0);
        let mut best = f64::INFINITY;
        let mut at_checkpoints = Vec::new();
        let mut last_update_norm = f64::INFINITY;
        for step in 1..=4000u64 {
            let g1 = toy.loss_gradient(0, &theta);
            let g2 = toy.loss_gradient(1, &theta);
            let sum_norm = g1.add(&g2).norm();
            best = best.min(sum_norm);
            let grads = GradientSet::new(vec![g1, g2]).unwrap();
            let r = config_update(&grads, &DirectionWeights::uniform(2), EPS_DEFAULT).unwrap();
            last_update_norm = r.magnitude;
            sgd_step(&mut theta, &r.update, gamma);
            if step % 500 == 0 {
                at_checkpoints.push(best);
            }
        }
        for pair in at_checkpoints.windows(2) {
            assert!(pair[1] <= pair[0], "best-seen norm rose: {pair:?}");
        }
        let (first, last) = (at_checkpoints[0], *at_checkpoints.last().unwrap());
        assert!(last < first, "no progress: {first:.3e} -> {last:.3e}");
        // The guaranteed limit is the disjunction from the convergence
        // analysis: a vanishing conflict-free update (gradients exactly
        // balance) or a stationary point of the sum.
        assert!(
            last_update_norm < 1e-6 || last < 1e-3,
            "neither branch reached: |update| {last_update_norm:.3e}, best |g_sum| {last:.3e}"
        );
    }

    #[test]
    fn maconfig_smoke_and_counters() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dim = 8;
        let m = 3;
        let mut ma = MaConfig::new(m, dim, 1e-3, EPS_DEFAULT, AdamParams::default());
        let mut theta = Vector::zeros(dim);
        for t in 1..=60u64 {
            let i = (t % m as u64) as usize;
            let g = Vector::from_vec((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            ma.step(i, &g, &mut theta).unwrap();
            assert!(theta.is_finite());
            let total: u64 = ma.per_loss_step_counts().iter().sum();
            assert_eq!(total, t);
        }
    }
}
