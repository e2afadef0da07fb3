//! Finite-difference ground-truth solver for the 1D Burgers equation
//! on x in [-1, 1], t in [0, 1] with u(x, 0) = -sin(pi x) and
//! u(+-1, t) = 0.
//!
//! Conservative central flux for the advection term, Crank-Nicolson
//! for the viscous term, with an explicit midpoint predictor so the
//! overall scheme is second order in space and time. The viscous solve
//! is a constant-coefficient tridiagonal system (Thomas algorithm).

use thiserror::Error;

/// Default viscosity, 0.01/pi.
pub const BURGERS_NU: f64 = 0.01 / std::f64::consts::PI;

const ADVECTIVE_CFL_LIMIT: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum FdError {
    #[error(
        "advective CFL violated: dt = {dt:.3e} exceeds {limit:.3e}; \
         use nt >= {suggested_nt} (dt <= {suggested_dt:.3e})"
    )]
    CflViolation {
        dt: f64,
        limit: f64,
        suggested_nt: usize,
        suggested_dt: f64,
    },
}

/// Tabulated space-time field with a bilinear interpolating evaluator.
#[derive(Debug, Clone)]
pub struct BurgersField {
    nx: usize,
    nt: usize,
    /// (nt + 1) rows of (nx + 1) values, t-major.
    data: Vec<f64>,
    pub nu: f64,
}

impl BurgersField {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    fn node(&self, it: usize, ix: usize) -> f64 {
        self.data[it * (self.nx + 1) + ix]
    }

    pub fn x_coord(&self, ix: usize) -> f64 {
        -1.0 + 2.0 * ix as f64 / self.nx as f64
    }

    pub fn t_coord(&self, it: usize) -> f64 {
        it as f64 / self.nt as f64
    }

    /// Bilinear interpolation; coordinates are clamped to the domain.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let fx = ((x + 1.0) / 2.0 * self.nx as f64).clamp(0.0, self.nx as f64);
        let ft = (t * self.nt as f64).clamp(0.0, self.nt as f64);
        let ix = (fx as usize).min(self.nx - 1);
        let it = (ft as usize).min(self.nt - 1);
        let ax = fx - ix as f64;
        let at = ft - it as f64;
        let v00 = self.node(it, ix);
        let v01 = self.node(it, ix + 1);
        let v10 = self.node(it + 1, ix);
        let v11 = self.node(it + 1, ix + 1);
        (1.0 - at) * ((1.0 - ax) * v00 + ax * v01) + at * ((1.0 - ax) * v10 + ax * v11)
    }

    /// One time slice (nx + 1 nodes).
    pub fn slice(&self, it: usize) -> &[f64] {
        &self.data[it * (self.nx + 1)..(it + 1) * (self.nx + 1)]
    }
}

/// Solve the constant-coefficient tridiagonal system
/// `(1 + 2a) x_i - a x_{i-1} - a x_{i+1} = rhs_i` on the interior.
fn thomas_solve(alpha: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    let diag = 1.0 + 2.0 * alpha;
    let off = -alpha;
    let mut beta = diag;
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = off / beta;
        beta = diag - off * scratch[i];
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// Conservative central advection derivative d(u^2/2)/dx at interior
/// nodes, with the Dirichlet endpoints held at zero.
fn advection(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    for i in 1..n - 1 {
        let fl = 0.25 * (u[i - 1] * u[i - 1] + u[i] * u[i]);
        let fr = 0.25 * (u[i] * u[i] + u[i + 1] * u[i + 1]);
        out[i] = (fr - fl) / dx;
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

fn second_diff(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    for i in 1..n - 1 {
        out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dx * dx);
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

/// Solve the Burgers equation on an `(nx + 1) x (nt + 1)` grid and
/// return the tabulated field. The advective CFL check uses the
/// initial maximum |u| = 1, which bounds |u| for all later times.
pub fn fd_burgers_oracle(nx: usize, nt: usize, nu: f64) -> Result<BurgersField, FdError> {
    assert!(nx >= 8 && nt >= 8);
    let dx = 2.0 / nx as f64;
    let dt = 1.0 / nt as f64;
    let u_max = 1.0;
    let limit = ADVECTIVE_CFL_LIMIT * dx / u_max;
    if dt > limit {
        let suggested_nt = (1.0 / limit).ceil() as usize;
        return Err(FdError::CflViolation {
            dt,
            limit,
            suggested_nt,
            suggested_dt: 1.0 / suggested_nt as f64,
        });
    }

    let n = nx + 1;
    let mut data = Vec::with_capacity((nt + 1) * n);
    let mut u: Vec<f64> = (0..n)
        .map(|i| -(std::f64::consts::PI * (-1.0 + 2.0 * i as f64 / nx as f64)).sin())
        .collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    data.extend_from_slice(&u);

    let alpha = 0.5 * nu * dt / (dx * dx);
    let mut adv = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut pred = vec![0.0; n];
    let mut rhs = vec![0.0; n - 2];
    let mut scratch = vec![0.0; n - 2];

    for _ in 0..nt {
        // Explicit midpoint predictor for the advection sample point.
        advection(&u, dx, &mut adv);
        second_diff(&u, dx, &mut diff);
        for i in 0..n {
            pred[i] = u[i] + 0.5 * dt * (-adv[i] + nu * diff[i]);
        }
        pred[0] = 0.0;
        pred[n - 1] = 0.0;
        advection(&pred, dx, &mut adv);

        // (I - a D2) u_new = u + dt (-A(pred)) + a D2 u
        for i in 1..n - 1 {
            rhs[i - 1] = u[i] - dt * adv[i] + alpha * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
        }
        thomas_solve(alpha, &mut rhs, &mut scratch);
        u[1..n - 1].copy_from_slice(&rhs);
        u[0] = 0.0;
        u[n - 1] = 0.0;
        data.extend_from_slice(&u);
    }

    Ok(BurgersField {
        nx,
        nt,
        data,
        nu,
    })
}

/// Relative L2 change between a solve at (nx, nt) and one at twice the
/// resolution, compared on the coarse nodes over all time slices.
pub fn grid_convergence(nx: usize, nt: usize, nu: f64) -> Result<f64, FdError> {
    let coarse = fd_burgers_oracle(nx, nt, nu)?;
    let fine = fd_burgers_oracle(2 * nx, 2 * nt, nu)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for it in 0..=nt {
        let cs = coarse.slice(it);
        let fs = fine.slice(2 * it);
        for ix in 0..=nx {
            let d = cs[ix] - fs[2 * ix];
            num += d * d;
            den += fs[2 * ix] * fs[2 * ix];
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}
