//! Gradient estimates: Lipschitz seminorms, the `L^γ` gradient budget, the
//! ingredients of the weighted Lipschitz bound, the interpolation step, the
//! Bernstein audit and the exponent gates.

use crate::duality::{check_aligned, trapezoid};
use crate::error::{Error, Result};
use crate::grid::{
    gradient_central, lp_space_norm, lq_spacetime_norm, one_sided_quotients, CoefField,
    ScalarField, TimeGrid, Trajectory,
};
use crate::hj::HJProblem;
use serde::{Deserialize, Serialize};

pub use crate::hj::lipschitz_seminorm;

/// Time cutoff profile: 0 on `[0, t1/2]`, 1 on `[t1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ramp {
    /// `3s² − 2s³`, C¹ with `sup|η′| = 3/t1`.
    #[default]
    Smoothstep,
    /// Piecewise linear, `sup|η′| = 2/t1`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipBoundConfig {
    pub t1: f64,
    pub ramp: Ramp,
    /// Integrability exponent of `f` used for the f-addend.
    pub q: f64,
}

impl LipBoundConfig {
    pub fn new(t1: f64, ramp: Ramp, q: f64) -> Result<Self> {
        if !(t1 > 0.0 && t1.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cutoff time {t1} must be positive"
            )));
        }
        if !(q > 1.0) {
            return Err(Error::BadExponent {
                value: q,
                reason: "f exponent must exceed 1",
            });
        }
        Ok(LipBoundConfig { t1, ramp, q })
    }

    pub fn eta(&self, t: f64) -> f64 {
        let s = ((t - 0.5 * self.t1) / (0.5 * self.t1)).clamp(0.0, 1.0);
        match self.ramp {
            Ramp::Smoothstep => s * s * (3.0 - 2.0 * s),
            Ramp::Linear => s,
        }
    }

    pub fn eta_prime(&self, t: f64) -> f64 {
        let s = (t - 0.5 * self.t1) / (0.5 * self.t1);
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let ds = 2.0 / self.t1;
        match self.ramp {
            Ramp::Smoothstep => 6.0 * s * (1.0 - s) * ds,
            Ramp::Linear => ds,
        }
    }

    pub fn sup_eta_prime(&self) -> f64 {
        match self.ramp {
            Ramp::Smoothstep => 3.0 / self.t1,
            Ramp::Linear => 2.0 / self.t1,
        }
    }
}

/// Centred Hessian `(u_11, u_12, u_22)`; mixed entries use the 4-point
/// cross stencil. In one dimension only `u_11` is filled.
pub fn hessian_central(u: &ScalarField) -> Vec<[f64; 3]> {
    let g = *u.grid();
    let h = g.h();
    let v = u.values();
    let ih2 = 1.0 / (h * h);
    (0..g.len())
        .map(|i| {
            let d2 = |k: usize| (v[g.shift(i, k, 1)] - 2.0 * v[i] + v[g.shift(i, k, -1)]) * ih2;
            if g.d() == 1 {
                return [d2(0), 0.0, 0.0];
            }
            let e = g.shift(i, 0, 1);
            let w = g.shift(i, 0, -1);
            let cross = v[g.shift(e, 1, 1)] - v[g.shift(e, 1, -1)] - v[g.shift(w, 1, 1)]
                + v[g.shift(w, 1, -1)];
            [d2(0), 0.25 * cross * ih2, d2(1)]
        })
        .collect()
}

/// Centred derivatives of the coefficient entries: `out[i][k]` is `∂_k a(i)`.
fn coef_gradient(a: &CoefField) -> Vec<[[f64; 3]; 2]> {
    let g = *a.grid();
    let inv = 0.5 / g.h();
    (0..g.len())
        .map(|i| {
            let mut out = [[0.0; 3]; 2];
            for (k, slot) in out.iter_mut().enumerate().take(g.d()) {
                let (p, m) = (a.get(g.shift(i, k, 1)), a.get(g.shift(i, k, -1)));
                for c in 0..3 {
                    slot[c] = (p[c] - m[c]) * inv;
                }
            }
            out
        })
        .collect()
}

/// Frobenius norm of a symmetric 2×2 matrix stored as `(m11, m12, m22)`.
fn sym_norm(m: [f64; 3]) -> f64 {
    (m[0] * m[0] + 2.0 * m[1] * m[1] + m[2] * m[2]).sqrt()
}

/// `sup_x |Da(x)|` with `|Da|² = Σ_k |∂_k a|²_F`.
pub fn coef_gradient_sup(a: &CoefField) -> f64 {
    coef_gradient(a)
        .iter()
        .map(|da| (sym_norm(da[0]).powi(2) + sym_norm(da[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// `sup_x |D²a(x)|` with second differences of every entry.
pub fn coef_hessian_sup(a: &CoefField) -> f64 {
    let g = *a.grid();
    let entries: Vec<ScalarField> = (0..3)
        .map(|c| ScalarField::from_vec_unchecked(g, a.values().iter().map(|v| v[c]).collect()))
        .collect();
    let hs: Vec<Vec<[f64; 3]>> = entries.iter().map(hessian_central).collect();
    (0..g.len())
        .map(|i| {
            let w = [1.0, 2.0, 1.0];
            (0..3)
                .map(|c| w[c] * sym_norm(hs[c][i]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest row divergence `|(∂_j a_ij)_i|`.
fn coef_divergence_sup(a: &CoefField) -> f64 {
    coef_gradient(a)
        .iter()
        .map(|da| {
            let r0 = da[0][0] + da[1][1];
            let r1 = da[0][1] + da[1][2];
            r0.hypot(r1)
        })
        .fold(0.0, f64::max)
}

fn sup_over_levels(problem: &HJProblem, last: usize, f: impl Fn(&CoefField) -> f64) -> f64 {
    match &problem.a {
        crate::hj::CoefSchedule::Constant(a) => f(a),
        crate::hj::CoefSchedule::Levels(v) => v[..=last.min(v.len() - 1)]
            .iter()
            .map(f)
            .fold(0.0, f64::max),
    }
}

fn gradient_norms(u: &Trajectory) -> Result<Trajectory> {
    let frames = u
        .frames()
        .iter()
        .map(|f| gradient_central(f).norm())
        .collect();
    Trajectory::new(*u.time_grid(), frames)
}

fn forcing_trajectory(problem: &HJProblem, tg: &TimeGrid) -> Result<Trajectory> {
    problem.f.trajectory(problem.grid(), tg, problem.f_cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LGammaBound {
    /// `‖Du‖_{L^γ(Q_T)}`.
    pub lhs: f64,
    pub rhs: f64,
    pub sup_u_final: f64,
    pub sup_u_initial: f64,
    /// `∬ |f|`.
    pub forcing: f64,
    /// `C_H · T`.
    pub growth: f64,
    /// Young remainder `T (‖div a‖/ε)^{γ′}/γ′`.
    pub coefficient: f64,
    pub holds: bool,
    pub slack: f64,
}

/// Gradient budget from testing the equation with 1: with
/// `H ≥ C_H^{-1}|p|^γ − C_H`,
/// `‖Du‖_γ^γ ≤ 2C_H (‖u(T)‖_∞ + ‖u(0)‖_∞ + ∬|f| + C_H T + T(‖div a‖/ε)^{γ′}/γ′)`.
pub fn lgamma_gradient_bound(u: &Trajectory, problem: &HJProblem, c_h: f64) -> Result<LGammaBound> {
    problem.grid().check_same(u.grid())?;
    if !(c_h > 0.0) {
        return Err(Error::InvalidInput(format!("C_H = {c_h} must be positive")));
    }
    let gamma = problem.ham.gamma();
    let gp = problem.ham.gamma_prime();
    let tg = *u.time_grid();
    let t_len = tg.t1() - tg.t0();
    let lhs = lq_spacetime_norm(&gradient_norms(u)?, gamma)?;
    let sup_u_final = lp_space_norm(u.last(), f64::INFINITY)?;
    let sup_u_initial = lp_space_norm(u.frame(0), f64::INFINITY)?;
    let f = forcing_trajectory(problem, &tg)?;
    let forcing = lq_spacetime_norm(&f, 1.0)?;
    let growth = c_h * t_len;
    let eps = (gamma / (2.0 * c_h)).powf(1.0 / gamma);
    let div_a = sup_over_levels(problem, tg.n_steps(), coef_divergence_sup);
    let coefficient = t_len * (div_a / eps).powf(gp) / gp;
    let budget = sup_u_final + sup_u_initial + forcing + growth + coefficient;
    let rhs = (2.0 * c_h * budget).powf(1.0 / gamma);
    Ok(LGammaBound {
        lhs,
        rhs,
        sup_u_final,
        sup_u_initial,
        forcing,
        growth,
        coefficient,
        holds: lhs <= rhs,
        slack: rhs - lhs,
    })
}

/// One adjoint density started from a Dirac approximation at `center`, used
/// with the difference quotient along `axis`.
#[derive(Debug, Clone)]
pub struct SweepMember {
    pub center: usize,
    pub axis: usize,
    pub rho: Trajectory,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Step2Addends {
    /// `‖D²a‖ ∬|Du|ρ + ‖Da‖ ∬η|Du||Dρ|`.
    pub a_term: f64,
    /// `∬ η |D_x L(x, D_pH(x, Du))| ρ`.
    pub dxl_term: f64,
    /// `‖ηf‖_{L^q} ‖Dρ‖_{L^{q′}}`.
    pub f_term: f64,
    /// `sup|η′| ‖u‖_∞ ‖Dρ‖_{L^1}`.
    pub eta_term: f64,
    /// `η(τ) (u(x₀ + h e_k, τ) − u(x₀, τ)) / h`.
    pub quotient: f64,
}

impl Step2Addends {
    fn max(self, o: Step2Addends) -> Step2Addends {
        Step2Addends {
            a_term: self.a_term.max(o.a_term),
            dxl_term: self.dxl_term.max(o.dxl_term),
            f_term: self.f_term.max(o.f_term),
            eta_term: self.eta_term.max(o.eta_term),
            quotient: self.quotient.max(o.quotient),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBoundReport {
    pub tau: f64,
    pub da_sup: f64,
    pub d2a_sup: f64,
    /// `(d+2)(γ−1)`, floored at 1 for the norm.
    pub exponent: f64,
    pub eta_du_norm: f64,
    pub sup_eta_prime: f64,
    pub eta_tau: f64,
    pub lipschitz_tau: f64,
    /// `η(τ) · Lip(u(τ))`.
    pub lhs: f64,
    /// `‖Da‖ ‖ηDu‖ + sup|η′| + 1`.
    pub rhs_core: f64,
    pub empirical_c: f64,
    pub addends: Vec<Step2Addends>,
    pub max_addends: Step2Addends,
}

/// Evaluates every ingredient of the weighted Lipschitz bound at the final
/// time `τ` of the sweep densities.
pub fn lipschitz_bound_terms(
    u: &Trajectory,
    sweep: &[SweepMember],
    problem: &HJProblem,
    config: &LipBoundConfig,
) -> Result<LipschitzBoundReport> {
    let first = sweep.first().ok_or(Error::MissingSweep)?;
    let g = *u.grid();
    problem.grid().check_same(&g)?;
    let tg = *first.rho.time_grid();
    for m in sweep {
        check_aligned(u, &m.rho)?;
        if m.rho.time_grid().n_steps() != tg.n_steps() {
            return Err(Error::GridMismatch(
                "sweep densities must share one time grid".into(),
            ));
        }
        if m.center >= g.len() || m.axis >= g.d() {
            return Err(Error::InvalidInput(format!(
                "sweep member ({}, {}) outside the grid",
                m.center, m.axis
            )));
        }
    }
    let last = tg.n_steps();
    let tau = tg.t1();
    let gamma = problem.ham.gamma();
    let d = g.d() as f64;
    let h = g.h();
    let vol = g.cell_volume();

    let da_sup = sup_over_levels(problem, last, coef_gradient_sup);
    let d2a_sup = sup_over_levels(problem, last, coef_hessian_sup);
    let exponent = ((d + 2.0) * (gamma - 1.0)).max(1.0);

    let u_tau = u.prefix(last)?;
    let du_norms = gradient_norms(&u_tau)?;
    let eta_du = Trajectory::new(
        tg,
        du_norms
            .frames()
            .iter()
            .enumerate()
            .map(|(k, f)| f.map(|v| config.eta(tg.time(k)) * v))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let eta_du_norm = lq_spacetime_norm(&eta_du, exponent)?;
    let sup_eta_prime = config.sup_eta_prime();
    let eta_tau = config.eta(tau);
    let lipschitz_tau = lipschitz_seminorm(u.frame(last));
    let lhs = eta_tau * lipschitz_tau;
    let rhs_core = da_sup * eta_du_norm + sup_eta_prime + 1.0;

    let f = forcing_trajectory(problem, &tg)?;
    let eta_f = Trajectory::new(
        tg,
        f.frames()
            .iter()
            .enumerate()
            .map(|(k, fr)| fr.map(|v| config.eta(tg.time(k)) * v))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let eta_f_norm = lq_spacetime_norm(&eta_f, config.q)?;
    let q_prime = config.q / (config.q - 1.0);
    let u_sup = u_tau
        .frames()
        .iter()
        .map(|fr| lp_space_norm(fr, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    // Per-level fields shared by all sweep members.
    let dxl: Vec<Vec<f64>> = (0..=last)
        .map(|k| {
            let du = gradient_central(u.frame(k));
            (0..g.len())
                .map(|i| {
                    if problem.hamiltonian_off {
                        return 0.0;
                    }
                    let nu = problem.ham.eval_dph_flagged(i, du.get(i)).0;
                    let v = problem.ham.eval_dxl(i, nu);
                    v[0].hypot(v[1])
                })
                .collect()
        })
        .collect();

    let addends: Vec<Step2Addends> = sweep
        .iter()
        .map(|m| -> Result<Step2Addends> {
            let drho: Vec<ScalarField> = m
                .rho
                .frames()
                .iter()
                .map(|r| one_sided_quotients(r).0.norm())
                .collect();
            let dr_traj = Trajectory::new(tg, drho.clone())?;
            let du_rho = trapezoid(&tg, 0, last, |k| {
                pairing(du_norms.frame(k).values(), m.rho.frame(k).values(), vol)
            });
            let eta_du_drho = trapezoid(&tg, 0, last, |k| {
                pairing(eta_du.frame(k).values(), drho[k].values(), vol)
            });
            let dxl_term = trapezoid(&tg, 0, last, |k| {
                config.eta(tg.time(k)) * pairing(&dxl[k], m.rho.frame(k).values(), vol)
            });
            let fin = u.frame(last);
            let quotient =
                eta_tau * (fin.get(g.shift(m.center, m.axis, 1)) - fin.get(m.center)) / h;
            Ok(Step2Addends {
                a_term: d2a_sup * du_rho + da_sup * eta_du_drho,
                dxl_term,
                f_term: eta_f_norm * lq_spacetime_norm(&dr_traj, q_prime)?,
                eta_term: sup_eta_prime * u_sup * lq_spacetime_norm(&dr_traj, 1.0)?,
                quotient,
            })
        })
        .collect::<Result<_>>()?;
    let max_addends = addends
        .iter()
        .copied()
        .fold(Step2Addends::default(), Step2Addends::max);

    Ok(LipschitzBoundReport {
        tau,
        da_sup,
        d2a_sup,
        exponent,
        eta_du_norm,
        sup_eta_prime,
        eta_tau,
        lipschitz_tau,
        lhs,
        rhs_core,
        empirical_c: lhs / rhs_core,
        addends,
        max_addends,
    })
}

fn pairing(a: &[f64], b: &[f64], vol: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * vol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub exponent: f64,
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `(d+2)(γ−1) ≤ γ`: no interpolation needed.
    pub trivial_branch: bool,
    pub holds: bool,
    pub slack: f64,
}

/// `‖g‖_r ≤ ‖g‖_∞^{1−θ} ‖g‖_γ^θ` with `r = (d+2)(γ−1)`, `θ = γ/r`, on the
/// trapezoid-in-time measure.
///
/// Both sides are evaluated as `M (Σ w (g/M)^e)^{1/r}` with `M = ‖g‖_∞`, so
/// the comparison is monotone term by term and needs no tolerance.
pub fn interpolation_step(g: &Trajectory, gamma: f64, d: usize) -> Result<InterpolationCheck> {
    if !(gamma > 1.0) {
        return Err(Error::BadGamma(gamma));
    }
    let r = (d as f64 + 2.0) * (gamma - 1.0);
    let theta = gamma / r;
    if r <= gamma {
        return Ok(InterpolationCheck {
            exponent: r,
            theta,
            lhs: f64::NAN,
            rhs: f64::NAN,
            trivial_branch: true,
            holds: true,
            slack: 0.0,
        });
    }
    let tg = g.time_grid();
    let vol = g.grid().cell_volume();
    let m = lq_spacetime_norm(g, f64::INFINITY)?;
    if m == 0.0 {
        return Ok(InterpolationCheck {
            exponent: r,
            theta,
            lhs: 0.0,
            rhs: 0.0,
            trivial_branch: false,
            holds: true,
            slack: 0.0,
        });
    }
    let sum = |e: f64| -> f64 {
        let mut s = 0.0;
        for (k, f) in g.frames().iter().enumerate() {
            let w = tg.trapezoid_weight(k) * vol;
            for v in f.values() {
                s += w * (v.abs() / m).powf(e);
            }
        }
        s
    };
    let lhs = m * sum(r).powf(1.0 / r);
    let rhs = m * sum(gamma).powf(1.0 / r);
    Ok(InterpolationCheck {
        exponent: r,
        theta,
        lhs,
        rhs,
        trivial_branch: false,
        holds: lhs <= rhs,
        slack: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinConfig {
    /// Largest admissible entry of the discrete Hessian.
    pub spike_threshold: f64,
    /// Relative tolerance for the integrated inequality.
    pub tol: f64,
}

impl Default for BernsteinConfig {
    fn default() -> Self {
        BernsteinConfig {
            spike_threshold: 1e6,
            tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub lambda: f64,
    /// Max over interior levels and cells of the z-equation residual.
    pub z_residual_sup: f64,
    /// Space-time `L²` norm of the same residual.
    pub z_residual_l2: f64,
    /// `min (Σ_k A D∂_ku·D∂_ku − λ Tr((D²u)²))`.
    pub ellipticity_min_gap: f64,
    /// `max |Σ_k A D∂_ku·D∂_ku − λ Tr((D²u)²)| / max(1, Tr((D²u)²))`.
    pub ellipticity_max_rel_gap: f64,
    pub pointwise_holds: bool,
    /// `∫ z(τ)ρ(τ) + λ ∬ Tr((D²u)²) ρ`.
    pub integrated_lhs: f64,
    pub z0_rho0: f64,
    /// `∬ |D_xH||Du| ρ`.
    pub dxh_term: f64,
    /// `∬ |f||Du||Dρ|`.
    pub i1: f64,
    /// `∬ |f||Tr(D²u)| ρ`.
    pub i2: f64,
    /// `∬ |Σ_k ∂_ku Tr(∂_kA D²u)| ρ`.
    pub da_term: f64,
    pub integrated_rhs: f64,
    pub integrated_holds: bool,
    pub slack: f64,
    pub max_hessian: f64,
}

fn trace_square(m: [f64; 3], d: usize) -> f64 {
    if d == 1 {
        m[0] * m[0]
    } else {
        m[0] * m[0] + 2.0 * m[1] * m[1] + m[2] * m[2]
    }
}

/// `Σ_k (row_k M)ᵀ A (row_k M)` for symmetric `M`.
fn quadratic_form(a: [f64; 3], m: [f64; 3], d: usize) -> f64 {
    if d == 1 {
        return a[0] * m[0] * m[0];
    }
    let q = |x: f64, y: f64| a[0] * x * x + 2.0 * a[1] * x * y + a[2] * y * y;
    q(m[0], m[1]) + q(m[1], m[2])
}

fn frob_contract(a: [f64; 3], m: [f64; 3], d: usize) -> f64 {
    if d == 1 {
        a[0] * m[0]
    } else {
        a[0] * m[0] + 2.0 * a[1] * m[1] + a[2] * m[2]
    }
}

/// Discrete audit of the Bernstein computation for `z = |Du|²/2`.
///
/// `rho` must solve the adjoint problem on a prefix of the levels of `u`.
pub fn bernstein_audit(
    u: &Trajectory,
    rho: &Trajectory,
    problem: &HJProblem,
    config: &BernsteinConfig,
) -> Result<BernsteinReport> {
    check_aligned(u, rho)?;
    let lambda = problem.validate()?;
    let g = *u.grid();
    problem.grid().check_same(&g)?;
    let d = g.d();
    let vol = g.cell_volume();
    let tg = *u.time_grid();
    let n = tg.n_steps();
    if n < 2 {
        return Err(Error::InvalidInput(
            "Bernstein audit needs at least two time steps".into(),
        ));
    }
    let dt = tg.dt();
    let ham = &problem.ham;
    let off = problem.hamiltonian_off;

    let hess: Vec<Vec<[f64; 3]>> = u.frames().iter().map(hessian_central).collect();
    let max_hessian = hess
        .iter()
        .flatten()
        .map(|m| m[0].abs().max(m[1].abs()).max(m[2].abs()))
        .fold(0.0, f64::max);
    if max_hessian > config.spike_threshold {
        return Err(Error::RoughData {
            max: max_hessian,
            threshold: config.spike_threshold,
        });
    }
    let grads: Vec<_> = u.frames().iter().map(gradient_central).collect();
    let z: Vec<ScalarField> = grads
        .iter()
        .map(|du| {
            ScalarField::from_vec_unchecked(
                g,
                du.values()
                    .iter()
                    .map(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]))
                    .collect(),
            )
        })
        .collect();
    let f = forcing_trajectory(problem, &tg)?;

    // Source side of the z-equation and related per-cell data at level k.
    let source = |k: usize, i: usize, dak: &[[[f64; 3]; 2]], df: [f64; 2]| -> (f64, f64, f64) {
        let du = grads[k].get(i);
        let hm = hess[k][i];
        let mut da_part = 0.0;
        for (c, dua) in du.iter().enumerate().take(d) {
            da_part += dua * frob_contract(dak[i][c], hm, d);
        }
        let dxh = if off { [0.0; 2] } else { ham.eval_dxh(i, du) };
        let dxh_du = dxh[0] * du[0] + dxh[1] * du[1];
        let df_du = df[0] * du[0] + df[1] * du[1];
        (da_part - dxh_du + df_du, da_part, dxh[0].hypot(dxh[1]))
    };

    let mut z_residual_sup: f64 = 0.0;
    let mut z_l2 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut max_rel_gap: f64 = 0.0;
    for k in 0..=n {
        let a = problem.a.at(k.min(problem.time.n_steps()));
        for (i, hm) in hess[k].iter().enumerate() {
            let tr = trace_square(*hm, d);
            let gap = quadratic_form(a.get(i), *hm, d) - lambda * tr;
            min_gap = min_gap.min(gap);
            max_rel_gap = max_rel_gap.max(gap.abs() / tr.max(1.0));
        }
        if k == 0 || k == n {
            continue;
        }
        let dak = coef_gradient(a);
        let az = crate::grid::ops::apply_nondiv(a, z[k].values());
        let dz = gradient_central(&z[k]);
        let dfk = gradient_central(f.frame(k));
        for i in 0..g.len() {
            let dtz = (z[k + 1].get(i) - z[k - 1].get(i)) / (2.0 * dt);
            let qf = quadratic_form(a.get(i), hess[k][i], d);
            let dz_i = dz.get(i);
            let transport = if off {
                0.0
            } else {
                let v = ham.eval_dph_flagged(i, grads[k].get(i)).0;
                v[0] * dz_i[0] + v[1] * dz_i[1]
            };
            let (src, _, _) = source(k, i, &dak, dfk.get(i));
            let r = dtz - az[i] + qf + transport - src;
            z_residual_sup = z_residual_sup.max(r.abs());
            z_l2 += r * r * vol * dt;
        }
    }

    let rt = *rho.time_grid();
    let last = rt.n_steps();
    let z_tau_rho = pairing(z[last].values(), rho.frame(last).values(), vol);
    let z0_rho0 = pairing(z[0].values(), rho.frame(0).values(), vol);
    let mut tr_rho = Vec::with_capacity(last + 1);
    let mut dxh_v = Vec::with_capacity(last + 1);
    let mut i1_v = Vec::with_capacity(last + 1);
    let mut i2_v = Vec::with_capacity(last + 1);
    let mut da_v = Vec::with_capacity(last + 1);
    for k in 0..=last {
        let a = problem.a.at(k.min(problem.time.n_steps()));
        let dak = coef_gradient(a);
        let r = rho.frame(k);
        let drho = one_sided_quotients(r).0.norm();
        let (mut s_tr, mut s_dxh, mut s_i1, mut s_i2, mut s_da) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..g.len() {
            let du = grads[k].get(i);
            let du_n = du[0].hypot(du[1]);
            let hm = hess[k][i];
            let ri = r.get(i);
            let (_, da_part, dxh_n) = source(k, i, &dak, [0.0; 2]);
            let fi = f.frame(k).get(i).abs();
            s_tr += trace_square(hm, d) * ri;
            s_dxh += dxh_n * du_n * ri;
            s_i1 += fi * du_n * drho.get(i);
            s_i2 += fi * (hm[0] + if d == 2 { hm[2] } else { 0.0 }).abs() * ri;
            s_da += da_part.abs() * ri;
        }
        tr_rho.push(s_tr * vol);
        dxh_v.push(s_dxh * vol);
        i1_v.push(s_i1 * vol);
        i2_v.push(s_i2 * vol);
        da_v.push(s_da * vol);
    }
    let integ = |v: &[f64]| trapezoid(&rt, 0, last, |k| v[k]);
    let integrated_lhs = z_tau_rho + lambda * integ(&tr_rho);
    let dxh_term = integ(&dxh_v);
    let i1 = integ(&i1_v);
    let i2 = integ(&i2_v);
    let da_term = integ(&da_v);
    let integrated_rhs = z0_rho0 + dxh_term + i1 + i2 + da_term;
    let integrated_holds = integrated_lhs <= integrated_rhs * (1.0 + config.tol) + config.tol;

    Ok(BernsteinReport {
        lambda,
        z_residual_sup,
        z_residual_l2: z_l2.sqrt(),
        ellipticity_min_gap: min_gap,
        ellipticity_max_rel_gap: max_rel_gap,
        pointwise_holds: min_gap >= -1e-10 * max_hessian.powi(2).max(1.0),
        integrated_lhs,
        z0_rho0,
        dxh_term,
        i1,
        i2,
        da_term,
        integrated_rhs,
        integrated_holds,
        slack: integrated_rhs - integrated_lhs,
        max_hessian,
    })
}

/// Hypothesis verdicts for a choice of exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentGate {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub d: usize,
    pub q: f64,
    pub p_space: f64,
    pub q_time: f64,
    /// `q > d+2` and `q ≥ (d+2)/(γ′−1)`.
    pub forcing_condition: bool,
    /// `d/(2P) + 1/Q ≤ 1/2`.
    pub aronson_serrin: bool,
    /// `q > max{d+2, (d+2)/(2(γ′−1))}`.
    pub apriori_condition: bool,
    /// `d+2` for `γ ≤ 3`, `(d+2)/(2(γ′−1)) = (d+2)(γ−1)/2` above.
    pub apriori_threshold: f64,
    /// `γ ≤ 3`: the threshold equals `d+2`.
    pub maximal_regularity_branch: bool,
    /// `(d+2)(γ−1)`.
    pub lipschitz_exponent: f64,
    /// `(d+2)(γ−1) ≤ γ`.
    pub trivial_interpolation: bool,
    /// `1 + (d+2)/q`.
    pub r_prime: f64,
    /// Embedding exponent `p` with `1/p = 1/q′ − 1/(d+2)`; infinite when the
    /// right side is not positive.
    pub embedding_p: f64,
}

/// Pure arithmetic on the exponents. Uses `1/(γ′−1) = γ−1` so that the
/// thresholds are exact for integer `γ`.
pub fn exponent_gate(gamma: f64, d: usize, q: f64, p: f64, qt: f64) -> Result<ExponentGate> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::BadExponent {
            value: gamma,
            reason: "gamma must exceed 1",
        });
    }
    if d == 0 {
        return Err(Error::DimensionUnsupported(d));
    }
    for e in [q, p, qt] {
        if e.is_nan() || e < 1.0 {
            return Err(Error::BadExponent {
                value: e,
                reason: "exponents must be at least 1",
            });
        }
    }
    let dd = d as f64 + 2.0;
    let gamma_prime = gamma / (gamma - 1.0);
    let lip_exponent = dd * (gamma - 1.0);
    let apriori_threshold = dd.max(dd * (gamma - 1.0) / 2.0);
    let aronson_serrin = d as f64 / (2.0 * p) + 1.0 / qt <= 0.5;
    let sigma = if q.is_infinite() { 1.0 } else { q / (q - 1.0) };
    let inv_p = 1.0 / sigma - 1.0 / dd;
    Ok(ExponentGate {
        gamma,
        gamma_prime,
        d,
        q,
        p_space: p,
        q_time: qt,
        forcing_condition: q > dd && q >= lip_exponent,
        aronson_serrin,
        apriori_condition: q > apriori_threshold,
        apriori_threshold,
        maximal_regularity_branch: gamma <= 3.0,
        lipschitz_exponent: lip_exponent,
        trivial_interpolation: lip_exponent <= gamma,
        r_prime: 1.0 + dd / q,
        embedding_p: if inv_p > 0.0 {
            1.0 / inv_p
        } else {
            f64::INFINITY
        },
    })
}
