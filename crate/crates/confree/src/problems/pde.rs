//! PDE residual operators, written once over an abstract arithmetic so
//! the same code path runs on tape nodes (training) and on plain
//! floats (validating the operators against analytic solutions).

use crate::autodiff::{NodeId, Tape};

/// Minimal arithmetic the residual operators need.
pub trait Arith {
    type V: Copy;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn scale(&mut self, a: Self::V, c: f64) -> Self::V;
}

impl Arith for Tape {
    type V = NodeId;
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Tape::add(self, a, b)
    }
    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Tape::sub(self, a, b)
    }
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Tape::mul(self, a, b)
    }
    fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        Tape::scale(self, a, c)
    }
}

/// Plain f64 arithmetic for analytic substitution.
pub struct PlainArith;

impl Arith for PlainArith {
    type V = f64;
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        c * a
    }
}

/// Field values and derivatives entering the Burgers residual.
pub struct BurgersFields<V> {
    pub u: V,
    pub u_t: V,
    pub u_x: V,
    pub u_xx: V,
}

/// `u_t + u u_x - nu u_xx`
pub fn burgers_residual<A: Arith>(ctx: &mut A, f: &BurgersFields<A::V>, nu: f64) -> A::V {
    let conv = ctx.mul(f.u, f.u_x);
    let lhs = ctx.add(f.u_t, conv);
    let visc = ctx.scale(f.u_xx, nu);
    ctx.sub(lhs, visc)
}

/// Field values and derivatives entering the steady 2D Navier-Stokes
/// residuals: velocity (u, v) and pressure p over (x, y).
pub struct KovasznayFields<V> {
    pub u: V,
    pub v: V,
    pub u_x: V,
    pub u_y: V,
    pub u_xx: V,
    pub u_yy: V,
    pub v_x: V,
    pub v_y: V,
    pub v_xx: V,
    pub v_yy: V,
    pub p_x: V,
    pub p_y: V,
}

/// Steady momentum-x, momentum-y, and continuity residuals:
/// `(u.grad)u + grad p - nu lap u` and `div u`.
pub fn kovasznay_residuals<A: Arith>(
    ctx: &mut A,
    f: &KovasznayFields<A::V>,
    nu: f64,
) -> [A::V; 3] {
    let mom_x = {
        let a = ctx.mul(f.u, f.u_x);
        let b = ctx.mul(f.v, f.u_y);
        let conv = ctx.add(a, b);
        let lap = ctx.add(f.u_xx, f.u_yy);
        let visc = ctx.scale(lap, nu);
        let s = ctx.add(conv, f.p_x);
        ctx.sub(s, visc)
    };
    let mom_y = {
        let a = ctx.mul(f.u, f.v_x);
        let b = ctx.mul(f.v, f.v_y);
        let conv = ctx.add(a, b);
        let lap = ctx.add(f.v_xx, f.v_yy);
        let visc = ctx.scale(lap, nu);
        let s = ctx.add(conv, f.p_y);
        ctx.sub(s, visc)
    };
    let cont = ctx.add(f.u_x, f.v_y);
    [mom_x, mom_y, cont]
}

/// `lambda = 1/(2 nu) - sqrt(1/(4 nu^2) + 4 pi^2)`
pub fn kovasznay_lambda(nu: f64) -> f64 {
    0.5 / nu - (0.25 / (nu * nu) + 4.0 * std::f64::consts::PI.powi(2)).sqrt()
}

/// Analytic Kovasznay solution `(u, v, p)` at a point.
pub fn kovasznay_analytic(nu: f64, x: f64, y: f64) -> [f64; 3] {
    use std::f64::consts::PI;
    let lam = kovasznay_lambda(nu);
    let e = (lam * x).exp();
    [
        1.0 - e * (2.0 * PI * y).cos(),
        lam / (2.0 * PI) * e * (2.0 * PI * y).sin(),
        0.5 * (1.0 - (2.0 * lam * x).exp()),
    ]
}

/// Analytic Kovasznay fields with every derivative the residual needs.
pub fn kovasznay_analytic_fields(nu: f64, x: f64, y: f64) -> KovasznayFields<f64> {
    use std::f64::consts::PI;
    let lam = kovasznay_lambda(nu);
    let e = (lam * x).exp();
    let c = (2.0 * PI * y).cos();
    let s = (2.0 * PI * y).sin();
    KovasznayFields {
        u: 1.0 - e * c,
        v: lam / (2.0 * PI) * e * s,
        u_x: -lam * e * c,
        u_y: 2.0 * PI * e * s,
        u_xx: -lam * lam * e * c,
        u_yy: 4.0 * PI * PI * e * c,
        v_x: lam * lam / (2.0 * PI) * e * s,
        v_y: lam * e * c,
        v_xx: lam.powi(3) / (2.0 * PI) * e * s,
        v_yy: -2.0 * PI * lam * e * s,
        p_x: -lam * (2.0 * lam * x).exp(),
        p_y: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_solution_zeroes_the_residuals() {
        let nu = 1.0 / 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = rng.gen_range(-0.5..1.0);
            let y = rng.gen_range(-0.5..1.5);
            let fields = kovasznay_analytic_fields(nu, x, y);
            let rs = kovasznay_residuals(&mut PlainArith, &fields, nu);
            for r in rs {
                worst = worst.max(r.abs());
            }
        }
        assert!(worst < 1e-10, "worst residual {worst}");
    }

    #[test]
    fn analytic_divergence_vanishes() {
        let nu = 1.0 / 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = rng.gen_range(-0.5..1.0);
            let y = rng.gen_range(-0.5..1.5);
            let f = kovasznay_analytic_fields(nu, x, y);
            assert!((f.u_x + f.v_y).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let nu = 1.0 / 40.0;
        let h = 1e-6;
        let (x, y) = (0.3, 0.7);
        let f = kovasznay_analytic_fields(nu, x, y);
        let u = |x: f64, y: f64| kovasznay_analytic(nu, x, y)[0];
        let v = |x: f64, y: f64| kovasznay_analytic(nu, x, y)[1];
        let p = |x: f64, y: f64| kovasznay_analytic(nu, x, y)[2];
        let fd = |f: &dyn Fn(f64, f64) -> f64, dx: f64, dy: f64| {
            (f(x + h * dx, y + h * dy) - f(x - h * dx, y - h * dy)) / (2.0 * h)
        };
        assert!((f.u_x - fd(&u, 1.0, 0.0)).abs() < 1e-6);
        assert!((f.u_y - fd(&u, 0.0, 1.0)).abs() < 1e-6);
        assert!((f.v_x - fd(&v, 1.0, 0.0)).abs() < 1e-6);
        assert!((f.v_y - fd(&v, 0.0, 1.0)).abs() < 1e-6);
        assert!((f.p_x - fd(&p, 1.0, 0.0)).abs() < 1e-6);
        assert!((f.p_y - fd(&p, 0.0, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn burgers_residual_of_zero_field_is_zero() {
        let f = BurgersFields {
            u: 0.0,
            u_t: 0.0,
            u_x: 0.0,
            u_xx: 0.0,
        };
        assert_eq!(burgers_residual(&mut PlainArith, &f, 0.01), 0.0);
    }
}
