//! Backward Fokker–Planck solver for
//! `−∂_t ρ − ∂_ij(a_ij ρ) − div(v ρ) = 0`, `ρ(τ) = ρ_τ`,
//! marched forward in `s = τ − t`.

use crate::error::{Error, Result};
use crate::grid::{gradient_central, ScalarField, TimeGrid, TorusGrid, Trajectory, VectorField};
use crate::hamiltonian::PowerHamiltonian;
use crate::hj::{numerical_hamiltonian, CoefSchedule, SchemeEval};
use crate::linsolve::ImplicitSolver;
use serde::{Deserialize, Serialize};

/// Negative values below this (in magnitude) are treated as round-off.
pub const NEGATIVE_TOL: f64 = 1e-13;

/// Drift `v(x, t)` of the adjoint equation.
#[derive(Debug, Clone)]
pub enum Drift {
    Zero,
    Steady(VectorField),
    /// One field per time level.
    Levels(Vec<VectorField>),
    /// `v = D_pH(x, Du)` from a forward trajectory on the same time grid.
    Hamiltonian {
        ham: PowerHamiltonian,
        u: Trajectory,
        hamiltonian_off: bool,
    },
}

impl Drift {
    /// Cell-centred drift at time level `k`.
    pub fn at(&self, grid: &TorusGrid, k: usize) -> VectorField {
        match self {
            Drift::Zero => VectorField::zeros(*grid),
            Drift::Steady(v) => v.clone(),
            Drift::Levels(v) => v[k].clone(),
            Drift::Hamiltonian {
                ham,
                u,
                hamiltonian_off,
            } => {
                if *hamiltonian_off {
                    return VectorField::zeros(*grid);
                }
                dph_of_gradient(ham, u.frame(k))
            }
        }
    }

    fn validate(&self, grid: &TorusGrid, time: &TimeGrid) -> Result<()> {
        match self {
            Drift::Zero => Ok(()),
            Drift::Steady(v) => grid.check_same(v.grid()),
            Drift::Levels(v) => {
                if v.len() != time.n_steps() + 1 {
                    return Err(Error::GridMismatch(format!(
                        "{} drift levels for {} time levels",
                        v.len(),
                        time.n_steps() + 1
                    )));
                }
                v.iter().try_for_each(|f| grid.check_same(f.grid()))
            }
            Drift::Hamiltonian { ham, u, .. } => {
                grid.check_same(ham.grid())?;
                grid.check_same(u.grid())?;
                let tu = u.time_grid();
                if tu.n_steps() != time.n_steps()
                    || (tu.t0() - time.t0()).abs() > 1e-12
                    || (tu.t1() - time.t1()).abs() > 1e-12
                {
                    return Err(Error::GridMismatch(
                        "forward trajectory and adjoint time grids differ".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// `D_pH(x, Du)` with the centred gradient.
pub fn dph_of_gradient(ham: &PowerHamiltonian, u: &ScalarField) -> VectorField {
    let du = gradient_central(u);
    let v = (0..u.grid().len())
        .map(|i| ham.eval_dph_flagged(i, du.get(i)).0)
        .collect();
    VectorField::from_vec_unchecked(*u.grid(), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    #[default]
    Upwind,
    Minmod,
    /// Second-order and not positivity preserving; for convergence oracles.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpMode {
    /// Conservative flux form with implicit diffusion.
    FluxForm { flux: FluxScheme },
    /// Exact transpose of the linearized forward step; needs a
    /// [`Drift::Hamiltonian`].
    Transpose,
}

impl Default for FpMode {
    fn default() -> Self {
        FpMode::FluxForm {
            flux: FluxScheme::Upwind,
        }
    }
}

/// Terminal datum approximating a point mass: the uniform density on a
/// `width`-cell box (per axis) around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiracApprox {
    pub center: usize,
    pub width: usize,
}

impl DiracApprox {
    pub fn field(&self, grid: &TorusGrid) -> Result<ScalarField> {
        if self.width == 0 || self.width > grid.n_per_axis() {
            return Err(Error::InvalidInput(format!(
                "dirac width {} outside 1..={}",
                self.width,
                grid.n_per_axis()
            )));
        }
        if self.center >= grid.len() {
            return Err(Error::InvalidInput(format!(
                "dirac center {} outside the grid",
                self.center
            )));
        }
        let mut v = vec![0.0; grid.len()];
        let lo = -((self.width as isize - 1) / 2);
        let hi = lo + self.width as isize;
        let cells = self.width.pow(grid.d() as u32) as f64;
        let height = 1.0 / (cells * grid.cell_volume());
        let c = self.center;
        for o0 in lo..hi {
            let x = grid.shift(c, 0, o0);
            if grid.d() == 1 {
                v[x] = height;
            } else {
                for o1 in lo..hi {
                    v[grid.shift(x, 1, o1)] = height;
                }
            }
        }
        ScalarField::new(*grid, v)
    }
}

#[derive(Debug, Clone)]
pub struct FPProblem {
    pub a: CoefSchedule,
    pub drift: Drift,
    pub rho_tau: ScalarField,
    /// `[t0, τ]`.
    pub time: TimeGrid,
    pub mode: FpMode,
    pub limiter: bool,
}

impl FPProblem {
    /// Renormalizes `rho_tau` to unit mass; rejects negative data.
    pub fn new(
        a: CoefSchedule,
        drift: Drift,
        rho_tau: ScalarField,
        time: TimeGrid,
    ) -> Result<Self> {
        if rho_tau.min() < 0.0 {
            return Err(Error::InvalidInput(format!(
                "terminal density has negative value {}",
                rho_tau.min()
            )));
        }
        let m = mass(&rho_tau);
        if !(m > 0.0) {
            return Err(Error::InvalidInput("terminal density has zero mass".into()));
        }
        let rho_tau = rho_tau.map(|v| v / m)?;
        let p = FPProblem {
            a,
            drift,
            rho_tau,
            time,
            mode: FpMode::default(),
            limiter: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_mode(mut self, mode: FpMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_limiter(mut self, on: bool) -> Self {
        self.limiter = on;
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        self.rho_tau.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let g = *self.grid();
        self.a.validate(&g, &self.time)?;
        self.drift.validate(&g, &self.time)?;
        if self.mode == FpMode::Transpose && !matches!(self.drift, Drift::Hamiltonian { .. }) {
            return Err(Error::InvalidInput(
                "transpose mode needs the forward trajectory as drift".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FPSolution {
    /// Densities at every level of the time grid, in increasing time.
    pub rho: Trajectory,
    /// Transpose mode only: `σⁿ = M⁻ᵀ ρⁿ⁺¹` for `n = 0..N−1`.
    pub sigma: Option<Vec<ScalarField>>,
    /// Largest `|mass − 1|` over all levels.
    pub mass_defect: f64,
    /// Largest mass removed by the positivity limiter in one step.
    pub clipped_mass: f64,
    /// Most negative value seen before clipping.
    pub min_before_clip: f64,
    pub max_cfl_ratio: f64,
}

/// Midpoint-rule integral.
pub fn mass(rho: &ScalarField) -> f64 {
    rho.integral()
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Explicit conservative transport with velocity `w = −v` (face averaged):
/// returns `ρ − dt·div_h(F)` and the CFL ratio.
fn advect(
    grid: &TorusGrid,
    v: &VectorField,
    rho: &[f64],
    dt: f64,
    flux: FluxScheme,
) -> (Vec<f64>, f64) {
    let n = grid.len();
    let h = grid.h();
    let mut out = rho.to_vec();
    let mut outflow = vec![0.0; n];
    for k in 0..grid.d() {
        let mut face = vec![0.0; n];
        for i in 0..n {
            let ip = grid.shift(i, k, 1);
            let w = -0.5 * (v.get(i)[k] + v.get(ip)[k]);
            let f = match flux {
                FluxScheme::Upwind => {
                    if w >= 0.0 {
                        w * rho[i]
                    } else {
                        w * rho[ip]
                    }
                }
                FluxScheme::Minmod => {
                    let im = grid.shift(i, k, -1);
                    let ipp = grid.shift(ip, k, 1);
                    if w >= 0.0 {
                        w * (rho[i] + 0.5 * minmod(rho[ip] - rho[i], rho[i] - rho[im]))
                    } else {
                        w * (rho[ip] - 0.5 * minmod(rho[ipp] - rho[ip], rho[ip] - rho[i]))
                    }
                }
                FluxScheme::Centered => 0.5 * w * (rho[i] + rho[ip]),
            };
            face[i] = f;
            outflow[i] += w.max(0.0);
            outflow[ip] -= w.min(0.0);
        }
        for i in 0..n {
            let im = grid.shift(i, k, -1);
            out[i] -= dt * (face[i] - face[im]) / h;
        }
    }
    let rate = outflow.iter().fold(0.0f64, |m, v| m.max(*v)) / h;
    let cfl = match flux {
        FluxScheme::Minmod => 2.0 * dt * rate,
        _ => dt * rate,
    };
    (out, cfl)
}

/// `ρ = σ − dt·Jᵀσ` with `J` the Jacobian of the numerical Hamiltonian.
fn transpose_explicit(grid: &TorusGrid, e: &SchemeEval, sigma: &[f64], dt: f64) -> Vec<f64> {
    let inv = 1.0 / grid.h();
    (0..grid.len())
        .map(|j| {
            let mut jt = 0.0;
            for k in 0..grid.d() {
                let jp = grid.shift(j, k, 1);
                let jm = grid.shift(j, k, -1);
                jt += sigma[j] * (e.c_minus[j][k] - e.c_plus[j][k]);
                jt -= e.c_minus[jp][k] * sigma[jp];
                jt += e.c_plus[jm][k] * sigma[jm];
            }
            sigma[j] - dt * jt * inv
        })
        .collect()
}

pub fn solve_backward(problem: &FPProblem) -> Result<FPSolution> {
    problem.validate()?;
    let g = *problem.grid();
    let tg = problem.time;
    let n = tg.n_steps();
    let dt = tg.dt();
    let vol = g.cell_volume();
    let mut frames: Vec<Option<ScalarField>> = vec![None; n + 1];
    let mut sigmas: Vec<Option<ScalarField>> = vec![None; n];
    let mut cur = problem.rho_tau.values().to_vec();
    let mut mass_defect: f64 = (mass(&problem.rho_tau) - 1.0).abs();
    let mut clipped_mass: f64 = 0.0;
    let mut min_before_clip = problem.rho_tau.min();
    let mut max_cfl: f64 = 0.0;
    let mut solver: Option<(usize, ImplicitSolver)> = None;
    frames[n] = Some(problem.rho_tau.clone());

    for step in (0..n).rev() {
        let fail = |e: Error| e.at_step(step);
        let level = step + 1;
        let reuse = matches!(&solver, Some((l, _)) if *l == level
            || problem.a.at(*l) == problem.a.at(level));
        if !reuse {
            solver = Some((level, ImplicitSolver::new(problem.a.at(level), dt)));
        }
        let imp = &solver.as_ref().unwrap().1;
        let pre_mass: f64 = cur.iter().sum::<f64>() * vol;
        let (next, cfl) = match problem.mode {
            FpMode::FluxForm { flux } => {
                let v = problem.drift.at(&g, step);
                let (adv, cfl) = advect(&g, &v, &cur, dt, flux);
                if cfl > 1.0 {
                    return Err(fail(Error::CflViolation {
                        step,
                        dt,
                        suggested_dt: 0.9 * dt / cfl,
                    }));
                }
                let (x, _) = imp.solve(&adv, true).map_err(|e| fail(relabel(e, step)))?;
                (x, cfl)
            }
            FpMode::Transpose => {
                let Drift::Hamiltonian {
                    ham,
                    u,
                    hamiltonian_off,
                } = &problem.drift
                else {
                    unreachable!("validated")
                };
                let e = numerical_hamiltonian(ham, u.frame(step).values(), *hamiltonian_off);
                let rate = e.max_rate(g.h());
                let cfl = dt * rate;
                if cfl > 1.0 {
                    return Err(fail(Error::CflViolation {
                        step,
                        dt,
                        suggested_dt: 0.9 / rate,
                    }));
                }
                let (sigma, _) = imp.solve(&cur, true).map_err(|e| fail(relabel(e, step)))?;
                let x = transpose_explicit(&g, &e, &sigma, dt);
                sigmas[step] = Some(ScalarField::from_vec_checked(g, sigma).map_err(fail)?);
                (x, cfl)
            }
        };
        max_cfl = max_cfl.max(cfl);
        let mut next = next;
        let lo = next.iter().copied().fold(f64::INFINITY, f64::min);
        min_before_clip = min_before_clip.min(lo);
        if lo < 0.0 {
            if problem.limiter {
                let neg: f64 = next.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * vol;
                clipped_mass = clipped_mass.max(neg);
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
                let m: f64 = next.iter().sum::<f64>() * vol;
                if m > 0.0 {
                    let s = pre_mass / m;
                    for v in next.iter_mut() {
                        *v *= s;
                    }
                }
            } else if lo < -NEGATIVE_TOL {
                return Err(fail(Error::NegativeDensity { step, min: lo }));
            }
        }
        let field = ScalarField::from_vec_checked(g, next).map_err(fail)?;
        mass_defect = mass_defect.max((mass(&field) - 1.0).abs());
        cur = field.values().to_vec();
        frames[step] = Some(field);
    }

    let frames = frames.into_iter().map(|f| f.expect("filled")).collect();
    Ok(FPSolution {
        rho: Trajectory::new(tg, frames)?,
        sigma: match problem.mode {
            FpMode::Transpose => Some(sigmas.into_iter().map(|s| s.expect("filled")).collect()),
            FpMode::FluxForm { .. } => None,
        },
        mass_defect,
        clipped_mass,
        min_before_clip,
        max_cfl_ratio: max_cfl,
    })
}

fn relabel(e: Error, step: usize) -> Error {
    match e {
        Error::LinearSolveFailure { residual, .. } => Error::LinearSolveFailure { step, residual },
        e => e,
    }
}

/// Drift-free backward solve.
pub fn heat_adjoint_solve(
    a: CoefSchedule,
    mu_tau: ScalarField,
    time: TimeGrid,
) -> Result<Trajectory> {
    let p = FPProblem::new(a, Drift::Zero, mu_tau, time)?;
    Ok(solve_backward(&p)?.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoefField;

    fn g1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn uniform_density_is_stationary() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mu = heat_adjoint_solve(
            CoefSchedule::Constant(CoefField::identity(g)),
            ScalarField::constant(g, 1.0).unwrap(),
            TimeGrid::new(0.0, 0.1, 20).unwrap(),
        )
        .unwrap();
        for f in mu.frames() {
            for v in f.values() {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirac_mass_and_positivity() {
        let g = TorusGrid::new(2, 32).unwrap();
        let rho = DiracApprox {
            center: 17,
            width: 1,
        }
        .field(&g)
        .unwrap();
        assert!((mass(&rho) - 1.0).abs() < 1e-14);
        assert_eq!(rho.max(), 1024.0);
        let v = VectorField::constant(g, [1.5, -0.5]).unwrap();
        let p = FPProblem::new(
            CoefSchedule::Constant(CoefField::identity(g)),
            Drift::Steady(v),
            rho,
            TimeGrid::new(0.0, 0.05, 50).unwrap(),
        )
        .unwrap();
        let sol = solve_backward(&p).unwrap();
        assert!(sol.mass_defect < 1e-12, "{}", sol.mass_defect);
        for f in sol.rho.frames() {
            assert!(f.min() >= -NEGATIVE_TOL);
        }
        assert!(sol.clipped_mass < 1e-12);
    }

    #[test]
    fn width_three_box() {
        let g = TorusGrid::new(2, 16).unwrap();
        let rho = DiracApprox {
            center: 0,
            width: 3,
        }
        .field(&g)
        .unwrap();
        assert_eq!(rho.values().iter().filter(|v| **v > 0.0).count(), 9);
        assert!((mass(&rho) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_mode_requires_trajectory() {
        let g = g1(16);
        let p = FPProblem::new(
            CoefSchedule::Constant(CoefField::identity(g)),
            Drift::Zero,
            ScalarField::constant(g, 1.0).unwrap(),
            TimeGrid::new(0.0, 1.0, 4).unwrap(),
        )
        .unwrap()
        .with_mode(FpMode::Transpose);
        assert!(solve_backward(&p).is_err());
    }

    #[test]
    fn advective_cfl_violation() {
        let g = g1(32);
        let p = FPProblem::new(
            CoefSchedule::Constant(CoefField::identity(g)),
            Drift::Steady(VectorField::constant(g, [100.0, 0.0]).unwrap()),
            ScalarField::constant(g, 1.0).unwrap(),
            TimeGrid::new(0.0, 1.0, 10).unwrap(),
        )
        .unwrap();
        let err = solve_backward(&p).unwrap_err();
        assert_eq!(err.tag(), "CFLViolation");
    }
}
