//! PINN problems assembled on the autodiff tape: a coordinate network,
//! symbolic input-derivative graphs, and mean-squared loss roots over
//! resampled collocation batches.

use super::fd_burgers::{fd_burgers_oracle, BurgersField};
use super::pde::{
    burgers_residual, kovasznay_analytic, kovasznay_residuals, BurgersFields, KovasznayFields,
};
use super::{latin_hypercube, mix_seed, Problem};
use crate::autodiff::{grad_wrt_inputs, grad_wrt_params, Mlp, MlpConfig, NodeId, Tape};
use crate::vecmath::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the PDE constraint terms are grouped into losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossGrouping {
    /// `[L_residual, L_boundary+initial]` (boundary and initial sample
    /// batches concatenated before the mean, equal per-point weight).
    Two,
    /// `[L_residual, L_boundary, L_initial]`.
    Three,
}

/// Sample-count configuration for one PINN problem.
#[derive(Debug, Clone, Copy)]
pub struct SampleCounts {
    pub interior: usize,
    pub boundary: usize,
    pub initial: usize,
}

enum Pde {
    Burgers { oracle: BurgersField },
    Kovasznay { nu: f64 },
}

/// One PDE training problem: tape, network, loss roots, samplers, and
/// a ground-truth evaluator for the test metric.
pub struct PinnProblem {
    tape: Tape,
    mlp: Mlp,
    pde: Pde,
    grouping: LossGrouping,
    counts: SampleCounts,
    /// Coordinate inputs per sample group, one node per dimension.
    interior_inputs: Vec<NodeId>,
    boundary_inputs: Vec<NodeId>,
    initial_inputs: Vec<NodeId>,
    /// Dirichlet target inputs for boundary (and initial) groups.
    boundary_targets: Vec<NodeId>,
    initial_targets: Vec<NodeId>,
    /// Loss roots and their forward masks.
    loss_roots: Vec<NodeId>,
    loss_masks: Vec<Vec<bool>>,
    total_root: NodeId,
    total_mask: Vec<bool>,
    /// Domain bounds per input dimension.
    bounds: Vec<(f64, f64)>,
    test_points: usize,
}

fn mean_sq(tape: &mut Tape, residual: NodeId, n: usize) -> NodeId {
    let ss = tape.sum_sq(residual);
    tape.scale(ss, 1.0 / n as f64)
}

/// Burgers equation problem on x in [-1,1], t in [0,1]: residual
/// `u_t + u u_x - nu u_xx`, boundary u(+-1, t) = 0, initial
/// u(x, 0) = -sin(pi x). Builds the finite-difference
/// ground truth internally.
pub fn burgers_problem(
    net: MlpConfig,
    counts: SampleCounts,
    grouping: LossGrouping,
    nu: f64,
) -> PinnProblem {
    assert_eq!(net.input_dim, 2, "burgers network takes (x, t)");
    assert_eq!(net.output_dim, 1, "burgers network has one head");
    let oracle = fd_burgers_oracle(1024, 2048, nu).expect("default oracle grid satisfies CFL");

    let mut tape = Tape::new();
    let mlp = Mlp::new(&mut tape, net, 0);

    // Interior residual graph.
    let xi = tape.input(counts.interior);
    let ti = tape.input(counts.interior);
    let u = mlp.forward(&mut tape, &[xi, ti])[0];
    let u_x = grad_wrt_inputs(&mut tape, u, xi, 1).expect("order 1");
    let u_xx = tape.grad(u_x, &[xi])[0];
    let u_t = grad_wrt_inputs(&mut tape, u, ti, 1).expect("order 1");
    let fields = BurgersFields { u, u_t, u_x, u_xx };
    let r = burgers_residual(&mut tape, &fields, nu);
    let l_res = mean_sq(&mut tape, r, counts.interior);

    // Boundary graph: u at x = +-1 vs zero target.
    let xb = tape.input(counts.boundary);
    let tb = tape.input(counts.boundary);
    let ub = mlp.forward(&mut tape, &[xb, tb])[0];
    let ssq_b = tape.sum_sq(ub);
    let l_bnd = tape.scale(ssq_b, 1.0 / counts.boundary as f64);

    // Initial graph: u(x, 0) vs -sin(pi x) supplied as target lanes.
    let x0 = tape.input(counts.initial);
    let t0 = tape.input(counts.initial);
    let target0 = tape.input(counts.initial);
    let u0 = mlp.forward(&mut tape, &[x0, t0])[0];
    let r0 = tape.sub(u0, target0);
    let ssq_i = tape.sum_sq(r0);
    let l_ini = tape.scale(ssq_i, 1.0 / counts.initial as f64);

    // Combined boundary+initial loss: concatenated batches, equal
    // per-point weight.
    let ssq_bi = tape.add(ssq_b, ssq_i);
    let l_bi = tape.scale(ssq_bi, 1.0 / (counts.boundary + counts.initial) as f64);

    let loss_roots = match grouping {
        LossGrouping::Two => vec![l_res, l_bi],
        LossGrouping::Three => vec![l_res, l_bnd, l_ini],
    };
    let total_root = loss_roots[1..]
        .iter()
        .fold(loss_roots[0], |acc, &r| tape.add(acc, r));
    let loss_masks = loss_roots.iter().map(|&r| tape.ancestors(r)).collect();
    let total_mask = tape.ancestors(total_root);

    PinnProblem {
        tape,
        mlp,
        pde: Pde::Burgers { oracle },
        grouping,
        counts,
        interior_inputs: vec![xi, ti],
        boundary_inputs: vec![xb, tb],
        initial_inputs: vec![x0, t0],
        boundary_targets: vec![],
        initial_targets: vec![target0],
        loss_roots,
        loss_masks,
        total_root,
        total_mask,
        bounds: vec![(-1.0, 1.0), (0.0, 1.0)],
        test_points: 10_000,
    }
}

/// Steady Kovasznay flow on x in [-0.5,1], y in [-0.5,1.5] at
/// Re = 1/nu: three network heads (u, v, p), Navier-Stokes residuals
/// inside the domain, Dirichlet boundary data from the analytic
/// solution. Always a two-loss problem `[L_residual, L_boundary]`.
pub fn kovasznay_problem(net: MlpConfig, counts: SampleCounts, re: f64) -> PinnProblem {
    assert_eq!(net.input_dim, 2, "kovasznay network takes (x, y)");
    assert_eq!(net.output_dim, 3, "kovasznay network outputs (u, v, p)");
    let nu = 1.0 / re;

    let mut tape = Tape::new();
    let mlp = Mlp::new(&mut tape, net, 0);

    let xi = tape.input(counts.interior);
    let yi = tape.input(counts.interior);
    let heads = mlp.forward(&mut tape, &[xi, yi]);
    let (u, v, p) = (heads[0], heads[1], heads[2]);
    let u_x = tape.grad(u, &[xi])[0];
    let u_y = tape.grad(u, &[yi])[0];
    let u_xx = tape.grad(u_x, &[xi])[0];
    let u_yy = tape.grad(u_y, &[yi])[0];
    let v_x = tape.grad(v, &[xi])[0];
    let v_y = tape.grad(v, &[yi])[0];
    let v_xx = tape.grad(v_x, &[xi])[0];
    let v_yy = tape.grad(v_y, &[yi])[0];
    let p_x = tape.grad(p, &[xi])[0];
    let p_y = tape.grad(p, &[yi])[0];
    let fields = KovasznayFields {
        u,
        v,
        u_x,
        u_y,
        u_xx,
        u_yy,
        v_x,
        v_y,
        v_xx,
        v_yy,
        p_x,
        p_y,
    };
    let [mx, my, cont] = kovasznay_residuals(&mut tape, &fields, nu);
    let s1 = tape.sum_sq(mx);
    let s2 = tape.sum_sq(my);
    let s3 = tape.sum_sq(cont);
    let s12 = tape.add(s1, s2);
    let s123 = tape.add(s12, s3);
    let l_res = tape.scale(s123, 1.0 / counts.interior as f64);

    // Boundary: all three outputs pinned to the analytic solution.
    let xb = tape.input(counts.boundary);
    let yb = tape.input(counts.boundary);
    let tu = tape.input(counts.boundary);
    let tv = tape.input(counts.boundary);
    let tp = tape.input(counts.boundary);
    let heads_b = mlp.forward(&mut tape, &[xb, yb]);
    let du = tape.sub(heads_b[0], tu);
    let dv = tape.sub(heads_b[1], tv);
    let dp = tape.sub(heads_b[2], tp);
    let b1 = tape.sum_sq(du);
    let b2 = tape.sum_sq(dv);
    let b3 = tape.sum_sq(dp);
    let b12 = tape.add(b1, b2);
    let b123 = tape.add(b12, b3);
    let l_bnd = tape.scale(b123, 1.0 / counts.boundary as f64);

    let loss_roots = vec![l_res, l_bnd];
    let total_root = tape.add(l_res, l_bnd);
    let loss_masks = loss_roots.iter().map(|&r| tape.ancestors(r)).collect();
    let total_mask = tape.ancestors(total_root);

    PinnProblem {
        tape,
        mlp,
        pde: Pde::Kovasznay { nu },
        grouping: LossGrouping::Two,
        counts,
        interior_inputs: vec![xi, yi],
        boundary_inputs: vec![xb, yb],
        initial_inputs: vec![],
        boundary_targets: vec![tu, tv, tp],
        initial_targets: vec![],
        loss_roots,
        loss_masks,
        total_root,
        total_mask,
        bounds: vec![(-0.5, 1.0), (-0.5, 1.5)],
        test_points: 10_000,
    }
}

impl PinnProblem {
    pub fn grouping(&self) -> LossGrouping {
        self.grouping
    }

    pub fn network(&self) -> &Mlp {
        &self.mlp
    }

    /// Graph size, a rough cost indicator.
    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    fn push_params(&mut self, params: &Vector) {
        self.mlp.set_params(&mut self.tape, params);
    }

    fn sample_interior(&mut self, rng: &mut ChaCha8Rng) {
        let cols = latin_hypercube(rng, self.counts.interior, &self.bounds);
        self.tape.set_input(self.interior_inputs[0], &cols[0]);
        self.tape.set_input(self.interior_inputs[1], &cols[1]);
    }

    fn sample_boundary(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.counts.boundary;
        match &self.pde {
            Pde::Burgers { .. } => {
                // Half the points on each wall, time Latin-hypercubed.
                let t = latin_hypercube(rng, n, &[(0.0, 1.0)]).remove(0);
                let x: Vec<f64> = (0..n)
                    .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
                    .collect();
                self.tape.set_input(self.boundary_inputs[0], &x);
                self.tape.set_input(self.boundary_inputs[1], &t);
            }
            Pde::Kovasznay { nu } => {
                let nu = *nu;
                // Points stratified over the four edges; Dirichlet
                // targets from the analytic solution.
                let (xlo, xhi) = self.bounds[0];
                let (ylo, yhi) = self.bounds[1];
                let mut xs = Vec::with_capacity(n);
                let mut ys = Vec::with_capacity(n);
                for i in 0..n {
                    let along = (i / 4) as f64 + rng.gen::<f64>();
                    let frac = along / (n / 4).max(1) as f64;
                    match i % 4 {
                        0 => {
                            xs.push(xlo);
                            ys.push(ylo + frac * (yhi - ylo));
                        }
                        1 => {
                            xs.push(xhi);
                            ys.push(ylo + frac * (yhi - ylo));
                        }
                        2 => {
                            xs.push(xlo + frac * (xhi - xlo));
                            ys.push(ylo);
                        }
                        _ => {
                            xs.push(xlo + frac * (xhi - xlo));
                            ys.push(yhi);
                        }
                    }
                }
                let mut tu = Vec::with_capacity(n);
                let mut tv = Vec::with_capacity(n);
                let mut tp = Vec::with_capacity(n);
                for i in 0..n {
                    let [u, v, p] = kovasznay_analytic(nu, xs[i], ys[i]);
                    tu.push(u);
                    tv.push(v);
                    tp.push(p);
                }
                self.tape.set_input(self.boundary_inputs[0], &xs);
                self.tape.set_input(self.boundary_inputs[1], &ys);
                self.tape.set_input(self.boundary_targets[0], &tu);
                self.tape.set_input(self.boundary_targets[1], &tv);
                self.tape.set_input(self.boundary_targets[2], &tp);
            }
        }
    }

    fn sample_initial(&mut self, rng: &mut ChaCha8Rng) {
        if matches!(self.pde, Pde::Kovasznay { .. }) {
            return;
        }
        let n = self.counts.initial;
        let x = latin_hypercube(rng, n, &[(-1.0, 1.0)]).remove(0);
        let zeros = vec![0.0; n];
        let target: Vec<f64> = x
            .iter()
            .map(|&xv| -(std::f64::consts::PI * xv).sin())
            .collect();
        self.tape.set_input(self.initial_inputs[0], &x);
        self.tape.set_input(self.initial_inputs[1], &zeros);
        self.tape.set_input(self.initial_targets[0], &target);
    }

    /// Mean squared error against ground truth on freshly sampled
    /// uniform test points (seeded, forward-only).
    fn test_mse(&mut self, params: &Vector, seed: u64) -> f64 {
        let snapshot = params.as_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, 77));
        let n = self.test_points;
        let mut acc = 0.0;
        match &self.pde {
            Pde::Burgers { oracle } => {
                for _ in 0..n {
                    let x = rng.gen_range(-1.0..1.0);
                    let t = rng.gen_range(0.0..1.0);
                    let pred = self.mlp.eval(snapshot, &[x, t])[0];
                    let truth = oracle.eval(x, t);
                    acc += (pred - truth) * (pred - truth);
                }
                acc / n as f64
            }
            Pde::Kovasznay { nu } => {
                let nu = *nu;
                for _ in 0..n {
                    let x = rng.gen_range(self.bounds[0].0..self.bounds[0].1);
                    let y = rng.gen_range(self.bounds[1].0..self.bounds[1].1);
                    let pred = self.mlp.eval(snapshot, &[x, y]);
                    let truth = kovasznay_analytic(nu, x, y);
                    for (p, t) in pred.iter().zip(truth) {
                        acc += (p - t) * (p - t);
                    }
                }
                acc / (3 * n) as f64
            }
        }
    }

    /// Export the ground-truth field the test metric compares against
    /// (Burgers only).
    pub fn oracle(&self) -> Option<&BurgersField> {
        match &self.pde {
            Pde::Burgers { oracle } => Some(oracle),
            Pde::Kovasznay { .. } => None,
        }
    }
}

impl Problem for PinnProblem {
    fn loss_names(&self) -> Vec<String> {
        match (&self.pde, self.grouping) {
            (Pde::Kovasznay { .. }, _) => vec!["residual".into(), "boundary".into()],
            (Pde::Burgers { .. }, LossGrouping::Two) => {
                vec!["residual".into(), "boundary_initial".into()]
            }
            (Pde::Burgers { .. }, LossGrouping::Three) => {
                vec!["residual".into(), "boundary".into(), "initial".into()]
            }
        }
    }

    fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    fn init_params(&mut self, seed: u64) -> Vector {
        let mut scratch = Tape::new();
        let init = Mlp::new(&mut scratch, self.mlp.config(), seed);
        init.get_params(&scratch)
    }

    fn resample(&mut self, iter: u64, run_seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, iter, 1));
        self.sample_interior(&mut rng);
        self.sample_boundary(&mut rng);
        self.sample_initial(&mut rng);
    }

    fn loss_values(&mut self, params: &Vector) -> Vec<f64> {
        self.push_params(params);
        self.tape.refresh_masked(&self.total_mask);
        self.loss_roots
            .iter()
            .map(|&r| self.tape.scalar_value(r))
            .collect()
    }

    fn loss_gradient(&mut self, i: usize, params: &Vector) -> Vector {
        self.push_params(params);
        self.tape.refresh_masked(&self.loss_masks[i]);
        grad_wrt_params(&mut self.tape, self.loss_roots[i], self.mlp.param_nodes())
    }

    fn sum_gradient(&mut self, params: &Vector) -> Vector {
        self.push_params(params);
        self.tape.refresh_masked(&self.total_mask);
        grad_wrt_params(&mut self.tape, self.total_root, self.mlp.param_nodes())
    }

    fn test_metric(&mut self, params: &Vector) -> f64 {
        self.test_mse(params, 424242)
    }

    fn backprops(&self) -> u64 {
        self.tape.backprops()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::BURGERS_NU;

    fn tiny_net(outputs: usize) -> MlpConfig {
        MlpConfig {
            input_dim: 2,
            hidden_layers: 2,
            hidden_width: 8,
            output_dim: outputs,
        }
    }

    fn tiny_counts() -> SampleCounts {
        SampleCounts {
            interior: 32,
            boundary: 8,
            initial: 8,
        }
    }

    #[test]
    fn burgers_losses_nonnegative_and_deterministic() {
        let mut p = burgers_problem(tiny_net(1), tiny_counts(), LossGrouping::Two, BURGERS_NU);
        let theta = p.init_params(3);
        p.resample(1, 9);
        let a = p.loss_values(&theta);
        let b = p.loss_values(&theta);
        assert_eq!(a, b);
        for v in a {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn burgers_initial_loss_of_zero_function_is_half() {
        // The zero network has residual 0 everywhere and initial loss
        // mean(sin^2(pi x)) ~ 0.5.
        let mut p = burgers_problem(
            tiny_net(1),
            SampleCounts {
                interior: 64,
                boundary: 16,
                initial: 4096,
            },
            LossGrouping::Three,
            BURGERS_NU,
        );
        let zeros = Vector::zeros(p.param_count());
        p.resample(1, 1);
        let losses = p.loss_values(&zeros);
        assert!(losses[0].abs() < 1e-30, "residual of zero function");
        assert!(losses[1].abs() < 1e-30, "boundary of zero function");
        assert!(
            (losses[2] - 0.5).abs() < 0.02,
            "initial loss {} should be near 0.5",
            losses[2]
        );
    }

    /// Worst FD-vs-reverse-mode relative error for one loss over at
    /// least 21 parameter coordinates.
    fn fd_worst(p: &mut PinnProblem, theta: &Vector, loss_idx: usize) -> f64 {
        let g = p.loss_gradient(loss_idx, theta);
        let h = 1e-4;
        let step = (p.param_count() / 21).max(1);
        let mut worst = 0.0f64;
        for pi in (0..p.param_count()).step_by(step) {
            let mut plus = theta.clone().into_vec();
            plus[pi] += h;
            let mut minus = theta.clone().into_vec();
            minus[pi] -= h;
            let lp = p.loss_values(&Vector::from_vec(plus))[loss_idx];
            let lm = p.loss_values(&Vector::from_vec(minus))[loss_idx];
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[pi] - fd).abs() / fd.abs().max(1e-4);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn burgers_gradients_match_finite_differences() {
        // Every loss family (residual, boundary, initial, and the
        // combined boundary+initial), five nets each.
        for seed in 0..5 {
            let mut p =
                burgers_problem(tiny_net(1), tiny_counts(), LossGrouping::Three, BURGERS_NU);
            let theta = p.init_params(seed);
            p.resample(1, seed);
            for loss_idx in 0..3 {
                let worst = fd_worst(&mut p, &theta, loss_idx);
                assert!(worst < 1e-5, "seed {seed} loss {loss_idx}: rel err {worst}");
            }
            let mut p =
                burgers_problem(tiny_net(1), tiny_counts(), LossGrouping::Two, BURGERS_NU);
            p.resample(1, seed);
            let worst = fd_worst(&mut p, &theta, 1);
            assert!(worst < 1e-5, "seed {seed} combined loss: rel err {worst}");
        }
    }

    #[test]
    fn kovasznay_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut p = kovasznay_problem(tiny_net(3), tiny_counts(), 40.0);
            let theta = p.init_params(seed);
            p.resample(1, seed);
            for loss_idx in 0..2 {
                let worst = fd_worst(&mut p, &theta, loss_idx);
                assert!(worst < 1e-5, "seed {seed} loss {loss_idx}: rel err {worst}");
            }
        }
    }

    #[test]
    fn backprop_counting_follows_gradient_calls() {
        let mut p = burgers_problem(tiny_net(1), tiny_counts(), LossGrouping::Two, BURGERS_NU);
        let theta = p.init_params(0);
        p.resample(1, 0);
        assert_eq!(p.backprops(), 0);
        let _ = p.loss_gradient(0, &theta);
        let _ = p.loss_gradient(1, &theta);
        assert_eq!(p.backprops(), 2);
        let _ = p.sum_gradient(&theta);
        assert_eq!(p.backprops(), 3);
        let _ = p.loss_values(&theta); // forward only
        assert_eq!(p.backprops(), 3);
    }

    #[test]
    fn two_loss_grouping_concatenates_batches() {
        // L_BI = (n_B L_B + n_I L_I) / (n_B + n_I).
        let counts = SampleCounts {
            interior: 16,
            boundary: 12,
            initial: 20,
        };
        let mut two = burgers_problem(tiny_net(1), counts, LossGrouping::Two, BURGERS_NU);
        let mut three = burgers_problem(tiny_net(1), counts, LossGrouping::Three, BURGERS_NU);
        let theta = two.init_params(8);
        two.resample(4, 6);
        three.resample(4, 6);
        let lv2 = two.loss_values(&theta);
        let lv3 = three.loss_values(&theta);
        assert!((lv2[0] - lv3[0]).abs() < 1e-15);
        let expected = (12.0 * lv3[1] + 20.0 * lv3[2]) / 32.0;
        assert!((lv2[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn test_metric_is_finite_and_positive() {
        let mut p = burgers_problem(tiny_net(1), tiny_counts(), LossGrouping::Two, BURGERS_NU);
        let theta = p.init_params(1);
        let mse = p.test_metric(&theta);
        assert!(mse.is_finite() && mse > 0.0);
    }
}
