//! Duality functionals between a forward solution `u` and an adjoint density
//! `ρ`: the representation formula, the energy, gradient moments, `‖Dρ‖`,
//! the Wasserstein-1 distance on the circle and the sup-norm bound.

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::fp::{dph_of_gradient, FPSolution};
use crate::grid::{
    gradient_central, lp_space_norm, lq_spacetime_norm, one_sided_quotients, ScalarField, TimeGrid,
    Trajectory,
};
use crate::hamiltonian::PowerHamiltonian;
use crate::hj::{numerical_hamiltonian, HJProblem};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Relative residual `|lhs − rhs| / max(1, |lhs|)`.
    pub relative_residual: f64,
    pub energy: f64,
    pub moments: BTreeMap<String, f64>,
    pub grad_rho_norm: f64,
    pub fitted_exponent: Option<f64>,
    pub sweep_id: Option<String>,
    pub metadata: DualityMetadata,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityMetadata {
    pub d: usize,
    pub n_per_axis: usize,
    pub dt: f64,
    pub s: f64,
    pub tau: f64,
    pub transpose_mode: bool,
    pub rho_tau: String,
}

/// Trapezoid rule over the levels `first..=last` of `weights_of(k)`.
pub(crate) fn trapezoid(
    tg: &TimeGrid,
    first: usize,
    last: usize,
    value: impl Fn(usize) -> f64,
) -> f64 {
    if first == last {
        return 0.0;
    }
    let dt = tg.dt();
    (first..=last)
        .map(|k| {
            let w = if k == first || k == last { 0.5 } else { 1.0 };
            w * dt * value(k)
        })
        .sum()
}

fn pairing(a: &[f64], b: &[f64], vol: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * vol
}

pub(crate) fn check_aligned(u: &Trajectory, rho: &Trajectory) -> Result<()> {
    u.grid().check_same(rho.grid())?;
    let (tu, tr) = (u.time_grid(), rho.time_grid());
    if (tu.dt() - tr.dt()).abs() > 1e-12 * tu.dt()
        || (tu.t0() - tr.t0()).abs() > 1e-12
        || tr.n_steps() > tu.n_steps()
    {
        return Err(Error::GridMismatch(
            "adjoint levels must be a prefix of the forward levels".into(),
        ));
    }
    Ok(())
}

/// Both sides of `∫u(τ)ρ_τ = ∫u(s)ρ(s) + ∬ L(x, D_pH(Du)) ρ + ∬ f ρ` on
/// `[s, τ]`, where `τ` is the final time of the adjoint solution.
///
/// With transpose-mode adjoint data the right side is assembled from the
/// same discrete Lagrangian and intermediate densities the schemes use, and
/// the identity holds to round-off. Otherwise both integrals use centred
/// gradients and the trapezoid rule in time.
pub fn representation_residual(
    u: &Trajectory,
    fp: &FPSolution,
    problem: &HJProblem,
    s: f64,
) -> Result<DualityReport> {
    let rho = &fp.rho;
    check_aligned(u, rho)?;
    let g = *u.grid();
    let vol = g.cell_volume();
    let tg = *rho.time_grid();
    let n = tg.n_steps();
    let m = tg.nearest_level(s);
    if m >= n {
        return Err(Error::InvalidInput(format!(
            "s = {s} must lie before tau = {}",
            tg.t1()
        )));
    }
    let ham = &problem.ham;
    let off = problem.hamiltonian_off;
    let f_at = |k: usize| problem.f.sample(&g, &problem.time, k, problem.f_cap).0;
    let lhs = pairing(u.frame(n).values(), rho.frame(n).values(), vol);
    let start = pairing(u.frame(m).values(), rho.frame(m).values(), vol);
    let mut rhs = start;
    match &fp.sigma {
        Some(sigma) => {
            for k in m..n {
                let e = numerical_hamiltonian(ham, u.frame(k).values(), off);
                let f = f_at(k + 1);
                let lag: Vec<f64> = if off {
                    vec![0.0; g.len()]
                } else {
                    (0..g.len())
                        .map(|i| {
                            let nu = ham.eval_dph_flagged(i, e.p_eff[i]).0;
                            ham.legendre(i, nu).value
                        })
                        .collect()
                };
                let src: Vec<f64> = lag.iter().zip(&f).map(|(l, f)| l + f).collect();
                rhs += tg.dt() * pairing(&src, sigma[k].values(), vol);
            }
        }
        None => {
            rhs += trapezoid(&tg, m, n, |k| {
                let r = rho.frame(k).values();
                let f = f_at(k);
                let lag = if off {
                    vec![0.0; g.len()]
                } else {
                    lagrangian_along(ham, u.frame(k))
                };
                let src: Vec<f64> = lag.iter().zip(&f).map(|(l, f)| l + f).collect();
                pairing(&src, r, vol)
            });
        }
    }
    let residual = (lhs - rhs).abs();
    Ok(DualityReport {
        lhs,
        rhs,
        residual,
        relative_residual: residual / lhs.abs().max(1.0),
        energy: energy_functional(u, rho, ham)?,
        moments: BTreeMap::new(),
        grad_rho_norm: 0.0,
        fitted_exponent: None,
        sweep_id: None,
        metadata: DualityMetadata {
            d: g.d(),
            n_per_axis: g.n_per_axis(),
            dt: tg.dt(),
            s: tg.time(m),
            tau: tg.t1(),
            transpose_mode: fp.sigma.is_some(),
            rho_tau: String::new(),
        },
    })
}

/// `L(x, D_pH(x, Du))` with the centred gradient.
pub fn lagrangian_along(ham: &PowerHamiltonian, u: &ScalarField) -> Vec<f64> {
    let du = gradient_central(u);
    (0..u.grid().len())
        .map(|i| {
            let nu = ham.eval_dph_flagged(i, du.get(i)).0;
            ham.legendre(i, nu).value
        })
        .collect()
}

/// `∬ |D_pH(x, Du)|^{γ′} ρ` over the time span of `rho`.
pub fn energy_functional(u: &Trajectory, rho: &Trajectory, ham: &PowerHamiltonian) -> Result<f64> {
    check_aligned(u, rho)?;
    let gp = ham.gamma_prime();
    let vol = u.grid().cell_volume();
    let tg = *rho.time_grid();
    Ok(trapezoid(&tg, 0, tg.n_steps(), |k| {
        let v = dph_of_gradient(ham, u.frame(k));
        v.values()
            .iter()
            .zip(rho.frame(k).values())
            .map(|(v, r)| v[0].hypot(v[1]).powf(gp) * r)
            .sum::<f64>()
            * vol
    }))
}

/// `∬ |Du|^β ρ` over the time span of `rho`.
pub fn gradient_moment(u: &Trajectory, rho: &Trajectory, beta: f64) -> Result<f64> {
    if !(beta >= 1.0) {
        return Err(Error::BadExponent {
            value: beta,
            reason: "moment exponent must be at least 1",
        });
    }
    check_aligned(u, rho)?;
    let vol = u.grid().cell_volume();
    let tg = *rho.time_grid();
    Ok(trapezoid(&tg, 0, tg.n_steps(), |k| {
        gradient_central(u.frame(k))
            .values()
            .iter()
            .zip(rho.frame(k).values())
            .map(|(v, r)| v[0].hypot(v[1]).powf(beta) * r)
            .sum::<f64>()
            * vol
    }))
}

/// `∬ |v|^r ρ` for a drift given per level.
pub fn drift_moment(rho: &Trajectory, drift: &crate::fp::Drift, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::BadExponent {
            value: r,
            reason: "moment exponent must be at least 1",
        });
    }
    let g = *rho.grid();
    let vol = g.cell_volume();
    let tg = *rho.time_grid();
    Ok(trapezoid(&tg, 0, tg.n_steps(), |k| {
        drift
            .at(&g, k)
            .values()
            .iter()
            .zip(rho.frame(k).values())
            .map(|(v, p)| v[0].hypot(v[1]).powf(r) * p)
            .sum::<f64>()
            * vol
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradRhoNorm {
    pub value: f64,
    pub q_prime: f64,
    /// `1 < q′ < (d+2)/(d+1)`.
    pub in_regime: bool,
}

/// Space-time `L^{q′}` norm of the forward-difference gradient of `ρ`.
pub fn grad_rho_norm(rho: &Trajectory, q_prime: f64) -> Result<GradRhoNorm> {
    let g = *rho.grid();
    let frames = rho
        .frames()
        .iter()
        .map(|f| one_sided_quotients(f).0.norm())
        .collect();
    let value = lq_spacetime_norm(&Trajectory::new(*rho.time_grid(), frames)?, q_prime)?;
    let d = g.d() as f64;
    Ok(GradRhoNorm {
        value,
        q_prime,
        in_regime: q_prime > 1.0 && q_prime < (d + 2.0) / (d + 1.0),
    })
}

/// Kantorovich–Rubinstein distance on the circle for cellwise-constant
/// densities: `min_c ∫ |G − c|` with `G` the primitive of `ρ_a − ρ_b`.
pub fn wasserstein1_1d(rho_a: &ScalarField, rho_b: &ScalarField) -> Result<f64> {
    let g = *rho_a.grid();
    g.check_same(rho_b.grid())?;
    if g.d() != 1 {
        return Err(Error::DimensionUnsupported(g.d()));
    }
    let h = g.h();
    // G at the left edge of each cell and the slope across it.
    let mut edges = Vec::with_capacity(g.len() + 1);
    let mut acc = 0.0;
    edges.push(0.0);
    for (a, b) in rho_a.values().iter().zip(rho_b.values()) {
        acc += (a - b) * h;
        edges.push(acc);
    }
    let cost = |c: f64| -> f64 {
        edges
            .windows(2)
            .map(|w| abs_linear_integral(w[0] - c, w[1] - c, h))
            .sum()
    };
    // Measure of {G < c}, nondecreasing in c; the minimizer is its median.
    let below = |c: f64| -> f64 {
        edges
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0] - c, w[1] - c);
                if a < 0.0 && b < 0.0 {
                    h
                } else if a >= 0.0 && b >= 0.0 {
                    0.0
                } else {
                    h * (if a < 0.0 { -a } else { -b }) / (b - a).abs()
                }
            })
            .sum()
    };
    let (mut lo, mut hi) = edges
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| {
            (l.min(*v), u.max(*v))
        });
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(cost(0.5 * (lo + hi)))
}

/// `∫_0^h |a + (b − a) x / h| dx`.
fn abs_linear_integral(a: f64, b: f64, h: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (a.abs() + b.abs())
    } else {
        0.5 * h * (a * a + b * b) / (a - b).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// `None` when every distance vanishes.
    pub exponent: Option<f64>,
    pub r_squared: f64,
    pub n_pairs: usize,
    pub degenerate: bool,
}

/// Least-squares slope of `log d₁(ρ(τ), ρ(τ − ℓ))` against `log ℓ` over
/// geometric lags `ℓ`.
pub fn holder_exponent_fit(rho: &Trajectory) -> Result<HolderFit> {
    let frames = rho.frames();
    if frames.len() < 8 {
        return Err(Error::InsufficientSamples {
            needed: 8,
            got: frames.len(),
        });
    }
    let n = frames.len() - 1;
    let dt = rho.time_grid().dt();
    let anchor = &frames[n];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1usize;
    while lag <= n {
        let d1 = wasserstein1_1d(anchor, &frames[n - lag])?;
        if d1 > 1e-14 {
            xs.push((lag as f64 * dt).ln());
            ys.push(d1.ln());
        }
        lag *= 2;
    }
    if xs.len() < 2 {
        return Ok(HolderFit {
            exponent: None,
            r_squared: 0.0,
            n_pairs: xs.len(),
            degenerate: true,
        });
    }
    let LinearFit {
        slope, r_squared, ..
    } = linear_fit(&xs, &ys)?;
    Ok(HolderFit {
        exponent: Some(slope),
        r_squared,
        n_pairs: xs.len(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNormBound {
    pub u0_sup: f64,
    pub f_norm: f64,
    pub mu_norm: f64,
    pub bound: f64,
    pub observed_max: f64,
    pub slack: f64,
    pub holds: bool,
}

/// `max u(·,τ) ≤ ‖u0‖_∞ + ‖f‖_{L^q(Q_τ)} ‖μ‖_{L^{q′}(Q_τ)}` with `μ` a
/// drift-free adjoint density from a point-mass datum.
pub fn sup_norm_duality_bound(
    u0: &ScalarField,
    f: &Trajectory,
    heat_mu: &Trajectory,
    q: f64,
    u_tau: &ScalarField,
) -> Result<SupNormBound> {
    if !(q > 1.0) {
        return Err(Error::BadExponent {
            value: q,
            reason: "forcing exponent must exceed 1",
        });
    }
    let qp = if q == f64::INFINITY {
        1.0
    } else {
        q / (q - 1.0)
    };
    let u0_sup = lp_space_norm(u0, f64::INFINITY)?;
    let f_norm = lq_spacetime_norm(f, q)?;
    let mu_norm = lq_spacetime_norm(heat_mu, qp)?;
    let bound = u0_sup + f_norm * mu_norm;
    let observed_max = u_tau.max();
    let slack = bound - observed_max;
    Ok(SupNormBound {
        u0_sup,
        f_norm,
        mu_norm,
        bound,
        observed_max,
        slack,
        holds: slack >= -1e-12 * bound.abs().max(1.0),
    })
}
