//! Forward solver for `∂_t u − a_ij ∂_ij u + H(x, Du) = f`: implicit in the
//! diffusion, explicit and monotone in the Hamiltonian.

use crate::error::{Error, Result};
use crate::grid::{
    ellipticity_certificate, gradient_central, one_sided_quotients, CoefField, ScalarField,
    TimeGrid, TorusGrid, Trajectory,
};
use crate::hamiltonian::PowerHamiltonian;
use crate::linsolve::ImplicitSolver;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub const DEFAULT_F_CAP: f64 = 1e6;

/// Diffusion matrix, either fixed or given at every time level.
#[derive(Debug, Clone)]
pub enum CoefSchedule {
    Constant(CoefField),
    Levels(Vec<CoefField>),
}

impl CoefSchedule {
    /// Coefficient field at time level `k`.
    pub fn at(&self, k: usize) -> &CoefField {
        match self {
            CoefSchedule::Constant(a) => a,
            CoefSchedule::Levels(v) => &v[k.min(v.len() - 1)],
        }
    }

    fn fields(&self) -> &[CoefField] {
        match self {
            CoefSchedule::Constant(a) => std::slice::from_ref(a),
            CoefSchedule::Levels(v) => v,
        }
    }

    pub(crate) fn validate(&self, grid: &TorusGrid, time: &TimeGrid) -> Result<f64> {
        if let CoefSchedule::Levels(v) = self {
            if v.len() != time.n_steps() + 1 {
                return Err(Error::GridMismatch(format!(
                    "{} coefficient levels for {} time levels",
                    v.len(),
                    time.n_steps() + 1
                )));
            }
        }
        let mut lam = f64::INFINITY;
        for a in self.fields() {
            grid.check_same(a.grid())?;
            lam = lam.min(ellipticity_certificate(a)?);
        }
        Ok(lam)
    }
}

pub type ForcingFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Right-hand side `f(x, t)`.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    Steady(ScalarField),
    Samples(Trajectory),
    Function(ForcingFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Steady(_) => write!(f, "Steady(..)"),
            Forcing::Samples(t) => write!(f, "Samples({} levels)", t.frames().len()),
            Forcing::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Forcing {
    /// Samples at time level `k`, clipped to `±cap`; returns the number of
    /// clipped cells.
    pub fn sample(
        &self,
        grid: &TorusGrid,
        time: &TimeGrid,
        k: usize,
        cap: f64,
    ) -> (Vec<f64>, usize) {
        let mut v = match self {
            Forcing::Zero => vec![0.0; grid.len()],
            Forcing::Steady(f) => f.values().to_vec(),
            Forcing::Samples(t) => t.frame(k).values().to_vec(),
            Forcing::Function(g) => {
                let t = time.time(k);
                (0..grid.len()).map(|i| g(grid.coord(i), t)).collect()
            }
        };
        let mut clipped = 0;
        for x in v.iter_mut() {
            if !x.is_finite() || x.abs() > cap {
                *x = if x.is_nan() { 0.0 } else { x.signum() * cap };
                clipped += 1;
            }
        }
        (v, clipped)
    }

    pub fn trajectory(&self, grid: &TorusGrid, time: &TimeGrid, cap: f64) -> Result<Trajectory> {
        let frames = (0..=time.n_steps())
            .map(|k| ScalarField::new(*grid, self.sample(grid, time, k, cap).0))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(*time, frames)
    }

    fn validate(&self, grid: &TorusGrid, time: &TimeGrid) -> Result<()> {
        match self {
            Forcing::Steady(f) => grid.check_same(f.grid()),
            Forcing::Samples(t) => {
                grid.check_same(t.grid())?;
                if t.frames().len() != time.n_steps() + 1 {
                    return Err(Error::GridMismatch(format!(
                        "{} forcing levels for {} time levels",
                        t.frames().len(),
                        time.n_steps() + 1
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HJProblem {
    pub a: CoefSchedule,
    pub ham: PowerHamiltonian,
    /// Replaces `H` by zero (linear heat equation with source).
    pub hamiltonian_off: bool,
    pub f: Forcing,
    pub u0: ScalarField,
    pub time: TimeGrid,
    pub f_cap: f64,
}

impl HJProblem {
    pub fn new(
        a: CoefSchedule,
        ham: PowerHamiltonian,
        f: Forcing,
        u0: ScalarField,
        time: TimeGrid,
    ) -> Result<Self> {
        let p = HJProblem {
            a,
            ham,
            hamiltonian_off: false,
            f,
            u0,
            time,
            f_cap: DEFAULT_F_CAP,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn pure_diffusion(mut self) -> Self {
        self.hamiltonian_off = true;
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        self.u0.grid()
    }

    /// Checks grid agreement and uniform ellipticity; returns `λ`.
    pub fn validate(&self) -> Result<f64> {
        let g = *self.grid();
        g.check_same(self.ham.grid())?;
        self.f.validate(&g, &self.time)?;
        self.a.validate(&g, &self.time)
    }
}

/// Monotone numerical Hamiltonian and its Jacobian coefficients at one state.
#[derive(Debug, Clone)]
pub struct SchemeEval {
    /// `Ĥ(u)` per cell, shift included.
    pub hhat: Vec<f64>,
    /// `∂Ĥ/∂(D⁻_k u) ≥ 0` per cell and axis.
    pub c_minus: Vec<[f64; 2]>,
    /// `∂Ĥ/∂(D⁺_k u) ≤ 0` per cell and axis.
    pub c_plus: Vec<[f64; 2]>,
    /// `L(x, D_pH(x, p_eff)) = (γ−1) h |p_eff|^γ − shift`, where `|p_eff|²`
    /// is the upwind sum of squares.
    pub lagrangian: Vec<f64>,
    /// Effective upwind gradient, with `|p_eff|² = S`.
    pub p_eff: Vec<[f64; 2]>,
}

impl SchemeEval {
    /// Largest `Σ_k (c⁻ − c⁺) / h`; explicit stability needs `dt` times this
    /// to be at most one.
    pub fn max_rate(&self, h: f64) -> f64 {
        self.c_minus
            .iter()
            .zip(&self.c_plus)
            .map(|(m, p)| (m[0] - p[0] + m[1] - p[1]) / h)
            .fold(0.0, f64::max)
    }
}

/// Godunov-type upwind evaluation: `h(x) S^{γ/2} + Σ_k drift_k + shift` with
/// `S = Σ_k max(D⁻_k u, 0)² + min(D⁺_k u, 0)²` and the drift upwinded by the
/// sign of `b_k`.
pub fn numerical_hamiltonian(ham: &PowerHamiltonian, u: &[f64], off: bool) -> SchemeEval {
    let g = *ham.grid();
    let n = g.len();
    if off {
        return SchemeEval {
            hhat: vec![0.0; n],
            c_minus: vec![[0.0; 2]; n],
            c_plus: vec![[0.0; 2]; n],
            lagrangian: vec![0.0; n],
            p_eff: vec![[0.0; 2]; n],
        };
    }
    let inv_h = 1.0 / g.h();
    let gamma = ham.gamma();
    let shift = ham.shift();
    let mut out = SchemeEval {
        hhat: Vec::with_capacity(n),
        c_minus: Vec::with_capacity(n),
        c_plus: Vec::with_capacity(n),
        lagrangian: Vec::with_capacity(n),
        p_eff: Vec::with_capacity(n),
    };
    for i in 0..n {
        let b = ham.b().get(i);
        let hx = ham.h().get(i);
        let mut s = 0.0;
        let mut drift = 0.0;
        let mut am = [0.0; 2];
        let mut bp = [0.0; 2];
        let mut pe = [0.0; 2];
        for k in 0..g.d() {
            let qm = (u[i] - u[g.shift(i, k, -1)]) * inv_h;
            let qp = (u[g.shift(i, k, 1)] - u[i]) * inv_h;
            am[k] = qm.max(0.0);
            bp[k] = qp.min(0.0);
            let sk = am[k] * am[k] + bp[k] * bp[k];
            s += sk;
            pe[k] = if am[k] + bp[k] < 0.0 {
                -sk.sqrt()
            } else {
                sk.sqrt()
            };
            drift += if b[k] >= 0.0 { b[k] * qm } else { b[k] * qp };
        }
        let (pow, coef) = if s > 0.0 {
            if gamma == 2.0 {
                (s, 2.0)
            } else {
                let p = s.powf(0.5 * gamma);
                (p, gamma * p / s)
            }
        } else {
            (0.0, 0.0)
        };
        out.hhat.push(hx * pow + drift + shift);
        out.lagrangian.push((gamma - 1.0) * hx * pow - shift);
        out.c_minus.push([
            hx * coef * am[0] + b[0].max(0.0),
            hx * coef * am[1] + b[1].max(0.0),
        ]);
        out.c_plus.push([
            hx * coef * bp[0] + b[0].min(0.0),
            hx * coef * bp[1] + b[1].min(0.0),
        ]);
        out.p_eff.push(pe);
    }
    if g.d() == 1 {
        for v in out.c_minus.iter_mut().chain(out.c_plus.iter_mut()) {
            v[1] = 0.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `max |Du|` (centred) of the state the step started from.
    pub max_grad: f64,
    /// `dt · max_rate`; at most one on accepted steps.
    pub cfl_ratio: f64,
    pub residual: f64,
    pub f_clipped: usize,
}

#[derive(Debug, Clone)]
pub struct HJSolution {
    pub u: Trajectory,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Lipschitz seminorm (largest forward-difference gradient norm) at every
    /// time level.
    pub lipschitz: Vec<f64>,
}

impl HJSolution {
    pub fn max_cfl_ratio(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.cfl_ratio)
            .fold(0.0, f64::max)
    }

    pub fn f_clipped(&self) -> usize {
        self.diagnostics.iter().map(|d| d.f_clipped).sum()
    }
}

/// Largest one-sided difference quotient over cells and axes (the discrete
/// `W^{1,∞}` seminorm).
pub fn lipschitz_seminorm(u: &ScalarField) -> f64 {
    let (fwd, _) = one_sided_quotients(u);
    let d = u.grid().d();
    fwd.values()
        .iter()
        .flat_map(|v| v[..d].iter())
        .fold(0.0, |m, q| m.max(q.abs()))
}

/// Reusable stepper: caches the implicit solver between steps with the same
/// coefficients.
pub struct HJStepper<'a> {
    problem: &'a HJProblem,
    solver: Option<(usize, ImplicitSolver)>,
}

impl<'a> HJStepper<'a> {
    pub fn new(problem: &'a HJProblem) -> Self {
        HJStepper {
            problem,
            solver: None,
        }
    }

    fn solver_for(&mut self, level: usize) -> &ImplicitSolver {
        let key = match self.problem.a {
            CoefSchedule::Constant(_) => 0,
            CoefSchedule::Levels(_) => level,
        };
        let rebuild = !matches!(&self.solver, Some((k, _)) if *k == key
            || (key > 0 && self.problem.a.at(*k) == self.problem.a.at(key)));
        if rebuild {
            let s = ImplicitSolver::new(self.problem.a.at(level), self.problem.time.dt());
            self.solver = Some((key, s));
        }
        &self.solver.as_ref().unwrap().1
    }

    /// Advances from level `k` to `k + 1`:
    /// `(I − dt A) u⁺ = u − dt Ĥ(u) + dt f(t_{k+1})`.
    pub fn step(&mut self, u: &ScalarField, k: usize) -> Result<(ScalarField, StepDiagnostics)> {
        let p = self.problem;
        let g = *p.grid();
        let dt = p.time.dt();
        let eval = numerical_hamiltonian(&p.ham, u.values(), p.hamiltonian_off);
        let rate = eval.max_rate(g.h());
        let cfl_ratio = dt * rate;
        if cfl_ratio > 1.0 {
            return Err(Error::CflViolation {
                step: k,
                dt,
                suggested_dt: 0.9 / rate,
            });
        }
        let (f, f_clipped) = p.f.sample(&g, &p.time, k + 1, p.f_cap);
        let rhs: Vec<f64> = u
            .values()
            .iter()
            .zip(&eval.hhat)
            .zip(&f)
            .map(|((ui, hi), fi)| ui - dt * hi + dt * fi)
            .collect();
        let (x, residual) = self
            .solver_for(k + 1)
            .solve(&rhs, false)
            .map_err(|e| relabel(e, k))?;
        let next = ScalarField::from_vec_checked(g, x)?;
        let max_grad = gradient_central(u)
            .values()
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max);
        Ok((
            next,
            StepDiagnostics {
                max_grad,
                cfl_ratio,
                residual,
                f_clipped,
            },
        ))
    }
}

fn relabel(e: Error, step: usize) -> Error {
    match e {
        Error::LinearSolveFailure { residual, .. } => Error::LinearSolveFailure { step, residual },
        e => e,
    }
}

/// One IMEX step from level `t_index`.
pub fn step_imex(u_t: &ScalarField, problem: &HJProblem, t_index: usize) -> Result<ScalarField> {
    problem.grid().check_same(u_t.grid())?;
    HJStepper::new(problem).step(u_t, t_index).map(|r| r.0)
}

/// Largest stable step for the explicit part at state `u`.
pub fn cfl_dt(ham: &PowerHamiltonian, u: &ScalarField) -> f64 {
    let rate = numerical_hamiltonian(ham, u.values(), false).max_rate(u.grid().h());
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

pub fn solve(problem: &HJProblem) -> Result<HJSolution> {
    problem.validate()?;
    let n = problem.time.n_steps();
    let mut stepper = HJStepper::new(problem);
    let mut frames = Vec::with_capacity(n + 1);
    let mut diagnostics = Vec::with_capacity(n);
    let mut lipschitz = Vec::with_capacity(n + 1);
    frames.push(problem.u0.clone());
    lipschitz.push(lipschitz_seminorm(&problem.u0));
    for k in 0..n {
        let (next, diag) = stepper.step(&frames[k], k).map_err(|e| e.at_step(k))?;
        lipschitz.push(lipschitz_seminorm(&next));
        diagnostics.push(diag);
        frames.push(next);
    }
    Ok(HJSolution {
        u: Trajectory::new(problem.time, frames)?,
        diagnostics,
        lipschitz,
    })
}

/// `∂_t u − a_ij ∂_ij u + H(x, Du) − f` with centred differences at interior
/// time levels `1..N−1`.
pub fn residual_classical(u: &Trajectory, problem: &HJProblem) -> Result<Trajectory> {
    let g = *problem.grid();
    g.check_same(u.grid())?;
    let tg = u.time_grid();
    let n = tg.n_steps();
    if n < 3 {
        return Err(Error::InvalidInput(
            "residual needs at least three time steps".into(),
        ));
    }
    let dt = tg.dt();
    let mut frames = Vec::with_capacity(n - 1);
    for k in 1..n {
        let a = problem.a.at(k.min(problem.time.n_steps()));
        let cur = u.frame(k);
        let lap = crate::grid::ops::apply_nondiv(a, cur.values());
        let du = gradient_central(cur);
        let (f, _) = problem.f.sample(&g, tg, k, problem.f_cap);
        let vals = (0..g.len())
            .map(|i| {
                let dtu = (u.frame(k + 1).get(i) - u.frame(k - 1).get(i)) / (2.0 * dt);
                let hv = if problem.hamiltonian_off {
                    0.0
                } else {
                    problem.ham.eval_h(i, du.get(i))
                };
                dtu - lap[i] + hv - f[i]
            })
            .collect();
        frames.push(ScalarField::from_vec_checked(g, vals)?);
    }
    Trajectory::new(TimeGrid::new(tg.time(1), tg.time(n - 1), n - 2)?, frames)
}
