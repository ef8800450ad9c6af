//! Periodic solvers for the implicit diffusion operator `M = I − dt·A_h`
//! and its transpose.
//!
//! Constant coefficients are diagonalized by the discrete Fourier transform.
//! Variable coefficients use a cyclic tridiagonal solve in one dimension and
//! preconditioned BiCGSTAB in two.

use crate::error::{Error, Result};
use crate::grid::ops::{apply_nondiv_into, apply_transpose_into};
use crate::grid::{CoefField, TorusGrid};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative residual every accepted solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

const KRYLOV_TOL: f64 = 1e-13;
const KRYLOV_MAX_ITER: usize = 400;

#[derive(Clone)]
struct FftSolver {
    grid: TorusGrid,
    symbol: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftSolver {
    fn new(grid: TorusGrid, a: [f64; 3], dt: f64) -> Self {
        let n = grid.n_per_axis();
        let h2 = grid.h() * grid.h();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let lam = |k: usize| {
            let th = 2.0 * PI * k as f64 / n as f64;
            (-4.0 * (0.5 * th).sin().powi(2) / h2, th.sin())
        };
        let symbol = (0..grid.len())
            .map(|idx| {
                let [k0, k1] = grid.multi_index(idx);
                let (l0, s0) = lam(k0);
                let mut op = a[0] * l0;
                if grid.d() == 2 {
                    let (l1, s1) = lam(k1);
                    op += a[2] * l1 - 2.0 * a[1] * s0 * s1 / h2;
                }
                1.0 - dt * op
            })
            .collect();
        FftSolver {
            grid,
            symbol,
            fwd,
            inv,
        }
    }

    fn transform(&self, data: &mut [Complex<f64>], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n_per_axis();
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        if self.grid.d() == 2 {
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for i0 in 0..n {
                for i1 in 0..n {
                    col[i1] = data[i0 + n * i1];
                }
                plan.process(&mut col);
                for i1 in 0..n {
                    data[i0 + n * i1] = col[i1];
                }
            }
        }
    }

    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd);
        for (c, s) in buf.iter_mut().zip(&self.symbol) {
            *c /= *s;
        }
        self.transform(&mut buf, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }
}

/// Solves a periodic tridiagonal system with corner entries
/// `lower[0]` (row 0, column n−1) and `upper[n−1]` (row n−1, column 0).
fn cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &bb, upper, rhs);
    let mut uvec = vec![0.0; n];
    uvec[0] = gamma;
    uvec[n - 1] = alpha;
    let z = thomas(lower, &bb, upper, &uvec);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut bet = diag[0];
    x[0] = rhs[0] / bet;
    for i in 1..n {
        c[i] = upper[i - 1] / bet;
        bet = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / bet;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

#[derive(Clone)]
enum Kind {
    Fft(FftSolver),
    Tridiagonal,
    Krylov(FftSolver),
}

/// Solver for `(I − dt·A_h) x = r` or its transpose, set up once per
/// coefficient field and step size.
#[derive(Clone)]
pub struct ImplicitSolver {
    grid: TorusGrid,
    a: Vec<[f64; 3]>,
    dt: f64,
    kind: Kind,
}

impl ImplicitSolver {
    pub fn new(a: &CoefField, dt: f64) -> Self {
        let grid = *a.grid();
        let kind = match a.as_constant() {
            Some(c) => Kind::Fft(FftSolver::new(grid, c, dt)),
            None if grid.d() == 1 => Kind::Tridiagonal,
            None => Kind::Krylov(FftSolver::new(grid, a.mean(), dt)),
        };
        ImplicitSolver {
            grid,
            a: a.values().to_vec(),
            dt,
            kind,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `y = M x` (or `Mᵀ x`).
    pub fn apply(&self, x: &[f64], transpose: bool, y: &mut [f64]) {
        if transpose {
            apply_transpose_into(&self.grid, &self.a, x, y);
        } else {
            apply_nondiv_into(&self.grid, &self.a, x, y);
        }
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - self.dt * *yi;
        }
    }

    /// Returns the solution and its relative residual; fails with
    /// [`Error::LinearSolveFailure`] (step 0, to be relabelled by the caller)
    /// above [`RESIDUAL_TOL`].
    pub fn solve(&self, rhs: &[f64], transpose: bool) -> Result<(Vec<f64>, f64)> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        match &self.kind {
            Kind::Fft(f) => f.solve(rhs, &mut x),
            Kind::Tridiagonal => x = self.tridiagonal(rhs, transpose),
            Kind::Krylov(pre) => x = self.bicgstab(pre, rhs, transpose),
        }
        let res = self.relative_residual(&x, rhs, transpose);
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::LinearSolveFailure {
                step: 0,
                residual: res,
            });
        }
        Ok((x, res))
    }

    pub fn relative_residual(&self, x: &[f64], rhs: &[f64], transpose: bool) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, transpose, &mut y);
        let num = y
            .iter()
            .zip(rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let den = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    fn tridiagonal(&self, rhs: &[f64], transpose: bool) -> Vec<f64> {
        let n = rhs.len();
        let c: Vec<f64> = self
            .a
            .iter()
            .map(|m| self.dt * m[0] / (self.grid.h() * self.grid.h()))
            .collect();
        let diag: Vec<f64> = c.iter().map(|ci| 1.0 + 2.0 * ci).collect();
        let (lower, upper): (Vec<f64>, Vec<f64>) = if transpose {
            (
                (0..n).map(|i| -c[(i + n - 1) % n]).collect(),
                (0..n).map(|i| -c[(i + 1) % n]).collect(),
            )
        } else {
            (
                c.iter().map(|v| -v).collect(),
                c.iter().map(|v| -v).collect(),
            )
        };
        cyclic_tridiagonal(&lower, &diag, &upper, rhs)
    }

    /// Right-preconditioned BiCGSTAB; the preconditioner is the constant
    /// coefficient solve at the mean of `a`.
    fn bicgstab(&self, pre: &FftSolver, b: &[f64], transpose: bool) -> Vec<f64> {
        let n = b.len();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return x;
        }
        pre.solve(b, &mut x);
        let mut r = vec![0.0; n];
        self.apply(&x, transpose, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut phat = vec![0.0; n];
        let mut shat = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        for _ in 0..KRYLOV_MAX_ITER {
            if dot(&r, &r).sqrt() <= KRYLOV_TOL * bnorm {
                break;
            }
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            pre.solve(&p, &mut phat);
            self.apply(&phat, transpose, &mut v);
            alpha = rho / dot(&r0, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if dot(&s, &s).sqrt() <= KRYLOV_TOL * bnorm {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                break;
            }
            pre.solve(&s, &mut shat);
            self.apply(&shat, transpose, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            if omega == 0.0 {
                break;
            }
        }
        x
    }
}
