//! Two-parameter synthetic landscapes: the smooth-bowl vs
//! multi-minima conflict pair, and fixed-gradient loss sets built from
//! the published aggregator failure vectors.

use super::Problem;
use crate::vecmath::Vector;

/// Two losses over two parameters sharing one global minimum at
/// `theta_star`:
///
/// - `L1 = 0.05 |d|^2` — a shallow bowl with small gradients;
/// - `L2 = 1 - cos(a d.dir) + 0.1 |d|^2` — larger gradients and a
///   ladder of local minima along `dir`,
///
/// with `d = theta - theta_star`. Away from the shared minimum the
/// cosine term dominates L2's gradient, so plain summed descent gets
/// pulled into whichever L2 well is nearest while L1 is still high.
pub struct ToyLandscape {
    pub theta_star: [f64; 2],
    /// Unit direction of the cosine ladder.
    pub dir: [f64; 2],
    /// Angular frequency of the ladder (wells every 2 pi / freq).
    pub freq: f64,
    backprops: u64,
}

/// The documented default landscape.
pub fn toy_landscape() -> ToyLandscape {
    let (dx, dy) = (1.0f64, 0.4f64);
    let n = (dx * dx + dy * dy).sqrt();
    ToyLandscape {
        theta_star: [0.6, -0.4],
        dir: [dx / n, dy / n],
        freq: 4.0 * std::f64::consts::PI,
        backprops: 0,
    }
}

impl ToyLandscape {
    fn displacement(&self, params: &Vector) -> [f64; 2] {
        [
            params[0] - self.theta_star[0],
            params[1] - self.theta_star[1],
        ]
    }

    pub fn loss1(&self, params: &Vector) -> f64 {
        let d = self.displacement(params);
        0.05 * (d[0] * d[0] + d[1] * d[1])
    }

    pub fn loss2(&self, params: &Vector) -> f64 {
        let d = self.displacement(params);
        let s = d[0] * self.dir[0] + d[1] * self.dir[1];
        1.0 - (self.freq * s).cos() + 0.1 * (d[0] * d[0] + d[1] * d[1])
    }

    pub fn grad1(&self, params: &Vector) -> Vector {
        let d = self.displacement(params);
        Vector::from_vec(vec![0.1 * d[0], 0.1 * d[1]])
    }

    pub fn grad2(&self, params: &Vector) -> Vector {
        let d = self.displacement(params);
        let s = d[0] * self.dir[0] + d[1] * self.dir[1];
        let ladder = self.freq * (self.freq * s).sin();
        Vector::from_vec(vec![
            ladder * self.dir[0] + 0.2 * d[0],
            ladder * self.dir[1] + 0.2 * d[1],
        ])
    }

    /// Upper bound on the Lipschitz constant of the summed gradient:
    /// `freq^2 + 0.3` (cosine curvature plus both quadratic terms).
    pub fn lipschitz_bound(&self) -> f64 {
        self.freq * self.freq + 0.3
    }

    /// The documented start used by the landscape comparison: a few
    /// ladder wells away from the minimum, off the ladder axis.
    pub fn start(&self) -> Vector {
        let normal = [-self.dir[1], self.dir[0]];
        Vector::from_vec(vec![
            self.theta_star[0] + 2.05 * self.dir[0] + 1.3 * normal[0],
            self.theta_star[1] + 2.05 * self.dir[1] + 1.3 * normal[1],
        ])
    }
}

impl Problem for ToyLandscape {
    fn loss_names(&self) -> Vec<String> {
        vec!["bowl".into(), "ladder".into()]
    }

    fn param_count(&self) -> usize {
        2
    }

    fn init_params(&mut self, _seed: u64) -> Vector {
        self.start()
    }

    fn loss_values(&mut self, params: &Vector) -> Vec<f64> {
        vec![self.loss1(params), self.loss2(params)]
    }

    fn loss_gradient(&mut self, i: usize, params: &Vector) -> Vector {
        self.backprops += 1;
        match i {
            0 => self.grad1(params),
            1 => self.grad2(params),
            _ => panic!("loss index {i} out of range"),
        }
    }

    fn sum_gradient(&mut self, params: &Vector) -> Vector {
        self.backprops += 1;
        self.grad1(params).add(&self.grad2(params))
    }

    fn test_metric(&mut self, params: &Vector) -> f64 {
        let d = self.displacement(params);
        d[0] * d[0] + d[1] * d[1]
    }

    fn backprops(&self) -> u64 {
        self.backprops
    }

    fn known_minimum(&self) -> Option<Vector> {
        Some(Vector::from_vec(self.theta_star.to_vec()))
    }
}

/// Losses with constant gradients, `L_i = g_i . theta`: the smallest
/// landscape on which aggregator conflict behavior is observable step
/// by step.
pub struct FixedGradients {
    grads: Vec<Vector>,
    backprops: u64,
}

impl FixedGradients {
    pub fn new(grads: Vec<Vector>) -> Self {
        assert!(!grads.is_empty());
        Self {
            grads,
            backprops: 0,
        }
    }
}

/// The three mutually conflicting vectors of the published PCGrad
/// failure case, as a loss set.
pub fn conflict_case_problem() -> FixedGradients {
    let s = 3f64.sqrt() / 2.0;
    FixedGradients::new(vec![
        Vector::from_vec(vec![1.0, 0.0, 0.1]),
        Vector::from_vec(vec![-0.5, s, 0.1]),
        Vector::from_vec(vec![-0.5, -s, 0.1]),
    ])
}

/// The published IMTL-G failure vectors (no pairwise conflicts, yet
/// the equal-projection weights come out negative), as a loss set.
pub fn imtlg_case_problem() -> FixedGradients {
    FixedGradients::new(vec![
        Vector::from_vec(vec![0.0412, 0.4295, 0.9394]),
        Vector::from_vec(vec![0.3571, 0.5491, 0.1414]),
        Vector::from_vec(vec![0.9823, 0.9361, 0.0552]),
    ])
}

impl Problem for FixedGradients {
    fn loss_names(&self) -> Vec<String> {
        (1..=self.grads.len()).map(|i| format!("lin_{i}")).collect()
    }

    fn param_count(&self) -> usize {
        self.grads[0].dim()
    }

    fn init_params(&mut self, _seed: u64) -> Vector {
        Vector::zeros(self.param_count())
    }

    fn loss_values(&mut self, params: &Vector) -> Vec<f64> {
        self.grads.iter().map(|g| g.dot(params)).collect()
    }

    fn loss_gradient(&mut self, i: usize, _params: &Vector) -> Vector {
        self.backprops += 1;
        self.grads[i].clone()
    }

    fn sum_gradient(&mut self, _params: &Vector) -> Vector {
        self.backprops += 1;
        let mut g = Vector::zeros(self.param_count());
        for gi in &self.grads {
            g = g.add(gi);
        }
        g
    }

    fn test_metric(&mut self, params: &Vector) -> f64 {
        self.grads.iter().map(|g| g.dot(params)).sum()
    }

    fn backprops(&self) -> u64 {
        self.backprops
    }
}
