//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use hjlab::counterexamples::{tail_bound, SelfSimilarCE, TailBehavior};
use hjlab::duality::{
    energy_functional, grad_rho_norm, holder_exponent_fit, representation_residual,
};
use hjlab::estimates::{bernstein_audit, exponent_gate, BernsteinConfig};
use hjlab::experiment::{
    emit_report, parse_config_str, run_experiment, LedgerRow, RunLedger, RunOptions,
};
use hjlab::fit::{loglog_slope, LadderVerdict};
use hjlab::fp::{
    heat_adjoint_solve, mass, solve_backward, DiracApprox, Drift, FPProblem, FluxScheme, FpMode,
};
use hjlab::grid::{CoefField, ScalarField, TimeGrid, TorusGrid, Trajectory, VectorField};
use hjlab::hamiltonian::PowerHamiltonian;
use hjlab::hj::{solve, CoefSchedule, Forcing, HJProblem, HJSolution};
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Debug>(err: E) -> String {
    format!("error: {err:?}")
}

fn slope(x: &[f64], y: &[f64]) -> Result<f64, String> {
    loglog_slope(x, y).map(|f| f.slope).map_err(e)
}

/// `0.3 sin 2πx (+ 0.2 cos 2πy)` with forcing `cos 2πx`, `a = I`, `h = 1`.
fn smooth_forward(
    d: usize,
    n: usize,
    gamma: f64,
    t: f64,
    steps: usize,
) -> Result<(HJProblem, HJSolution), String> {
    let g = TorusGrid::new(d, n).map_err(e)?;
    let u0 = ScalarField::from_fn(g, |x| {
        0.3 * (2.0 * PI * x[0]).sin()
            + if d == 2 {
                0.2 * (2.0 * PI * x[1]).cos()
            } else {
                0.0
            }
    })
    .map_err(e)?;
    let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).map_err(e)?;
    let ham = PowerHamiltonian::constant(g, gamma, 1.0, [0.0; 2]).map_err(e)?;
    let p = HJProblem::new(
        CoefSchedule::Constant(CoefField::identity(g)),
        ham,
        Forcing::Steady(f),
        u0,
        TimeGrid::new(0.0, t, steps).map_err(e)?,
    )
    .map_err(e)?;
    let sol = solve(&p).map_err(e)?;
    Ok((p, sol))
}

fn adjoint(
    p: &HJProblem,
    sol: &HJSolution,
    rho_tau: ScalarField,
    mode: FpMode,
) -> Result<hjlab::fp::FPSolution, String> {
    let fp = FPProblem::new(
        p.a.clone(),
        Drift::Hamiltonian {
            ham: p.ham.clone(),
            u: sol.u.clone(),
            hamiltonian_off: false,
        },
        rho_tau,
        *sol.u.time_grid(),
    )
    .map_err(e)?
    .with_mode(mode)
    .with_limiter(true);
    solve_backward(&fp).map_err(e)
}

fn pipeline(src: &str) -> Result<Vec<LedgerRow>, String> {
    let cfg = parse_config_str(src, Path::new(".")).map_err(e)?;
    let opts = RunOptions {
        force: true,
        timestamps: false,
        jobs: None,
    };
    let rows = run_experiment(&cfg, &opts, &mut RunLedger::new()).map_err(e)?;
    if let Some(bad) = rows.iter().find(|r| !r.is_ok()) {
        return Err(format!("member {} failed: {:?}", bad.run_id, bad.error));
    }
    Ok(rows)
}

fn metric(r: &LedgerRow, k: &str) -> Result<f64, String> {
    r.metric(k)
        .ok_or_else(|| format!("row {} lacks {k}", r.run_id))
}

fn with_member<'a>(rows: &'a [LedgerRow], key: &str) -> Vec<&'a LedgerRow> {
    rows.iter().filter(|r| r.member.contains_key(key)).collect()
}

fn duality_exactness() -> Outcome {
    let (p, sol) = smooth_forward(1, 128, 2.0, 0.1, 400)?;
    let rho_tau = DiracApprox {
        center: 32,
        width: 1,
    }
    .field(p.grid())
    .map_err(e)?;
    let adj = adjoint(&p, &sol, rho_tau, FpMode::Transpose)?;
    let rep = representation_residual(&sol.u, &adj, &p, 0.0).map_err(e)?;
    check(
        rep.residual <= 1e-10,
        format!("residual {:.2e} (lhs {:.6})", rep.residual, rep.lhs),
    )
}

fn mass_and_positivity() -> Outcome {
    let mut worst_mass: f64 = 0.0;
    let mut worst_min = f64::INFINITY;
    let mut runs = 0;
    for n in [64usize, 128] {
        let (p, sol) = smooth_forward(2, n, 2.0, 0.05, 200)?;
        let g = *p.grid();
        for c in 0..16 {
            let center = g.index((c % 4) * n / 4 + n / 8, (c / 4) * n / 4 + n / 8);
            for width in [1usize, 3, 5] {
                let rho_tau = DiracApprox { center, width }.field(&g).map_err(e)?;
                let adj = adjoint(
                    &p,
                    &sol,
                    rho_tau,
                    FpMode::FluxForm {
                        flux: FluxScheme::Upwind,
                    },
                )?;
                for r in adj.rho.frames() {
                    worst_mass = worst_mass.max((mass(r) - 1.0).abs());
                    worst_min = worst_min.min(r.min());
                }
                runs += 1;
            }
        }
    }
    check(
        worst_mass <= 1e-12 && worst_min >= -1e-13,
        format!("{runs} runs, max |mass−1| {worst_mass:.1e}, min ρ {worst_min:.1e}"),
    )
}

fn energy_stability() -> Outcome {
    let mut vals = Vec::new();
    for n in [64usize, 128, 256] {
        let (p, sol) = smooth_forward(1, n, 2.0, 0.1, 8 * n)?;
        for width in [1usize, 3, 5] {
            let rho_tau = DiracApprox {
                center: n / 4,
                width,
            }
            .field(p.grid())
            .map_err(e)?;
            let adj = adjoint(&p, &sol, rho_tau, FpMode::default())?;
            vals.push(energy_functional(&sol.u, &adj.rho, &p.ham).map_err(e)?);
        }
    }
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi;
    check(
        spread <= 0.1,
        format!(
            "energy in [{lo:.5}, {hi:.5}], spread {:.2}%",
            100.0 * spread
        ),
    )
}

fn regularization_threshold() -> Outcome {
    let src = r#"
[run]
kind = "hj"
[grid]
d = 1
n = [64, 128, 256]
t_final = 0.05
dt_factor = 0.25
dt_power = 2.0
[problem]
gamma = 2.0
u0 = "rough_sqrt_sin"
f = "cos(2*pi*x)"
"#;
    let gate = parse_config_str(src, Path::new(".")).map_err(e)?.gate;
    let rows = pipeline(src)?;
    let hs: Vec<f64> = rows
        .iter()
        .map(|r| metric(r, "h"))
        .collect::<Result<_, _>>()?;
    let l0: Vec<f64> = rows
        .iter()
        .map(|r| metric(r, "lip_initial"))
        .collect::<Result<_, _>>()?;
    let l1: Vec<f64> = rows
        .iter()
        .map(|r| metric(r, "lip_final"))
        .collect::<Result<_, _>>()?;
    let (s0, s1) = (slope(&hs, &l0)?, slope(&hs, &l1)?);
    check(
        gate.forcing_condition && s1 >= -0.1 && (s0 + 0.5).abs() <= 0.1,
        format!(
            "slope at t=0 {s0:.3}, at t=0.05 {s1:.3} (lip {:.3} → {:.3})",
            l1[0], l1[2]
        ),
    )
}

fn u1_sharpness() -> Outcome {
    let src = r#"
[run]
kind = "counterexample"
[grid]
d = 2
n = [32, 64, 128, 256]
[counterexample]
which = "u1"
gamma = 3.0
exponents = [1.5, 2.5]
"#;
    let rows = pipeline(src)?;
    let dir = tempfile::tempdir().map_err(e)?;
    let summary = emit_report(&rows, dir.path()).map_err(e)?;
    let fit = summary
        .fits
        .iter()
        .find(|f| f.quantity == "lip")
        .ok_or("no lip fit in the report")?;
    let scans = with_member(&rows, "scan_p");
    let verdict = |p: f64| -> Result<(LadderVerdict, f64), String> {
        let r = scans
            .iter()
            .find(|r| r.member["scan_p"].as_f64() == Some(p))
            .ok_or(format!("no scan at P = {p}"))?;
        let v = serde_json::from_value(r.metrics["verdict"].clone()).map_err(e)?;
        Ok((v, metric(r, "slope")?))
    };
    let (lo, slo) = verdict(1.5)?;
    let (hi, shi) = verdict(2.5)?;
    check(
        lo == LadderVerdict::Convergent
            && slo < 0.0
            && hi == LadderVerdict::Divergent
            && shi > 0.0
            && (fit.slope + 0.5).abs() <= 0.1,
        format!(
            "P=1.5 {lo:?} (slope {slo:.3}), P=2.5 {hi:?} (slope {shi:.3}), lip slope {:.3}",
            fit.slope
        ),
    )
}

fn u2_profile() -> Outcome {
    let src = r#"
[run]
kind = "counterexample"
[grid]
d = 2
n = 128
[counterexample]
which = "u2"
gamma = 1.5
times = [1e-1, 1e-2, 1e-3, 1e-4]
"#;
    let rows = pipeline(src)?;
    let prof = rows
        .iter()
        .find(|r| !r.member.contains_key("t"))
        .ok_or("no profile row")?;
    let residual = metric(prof, "ode_residual")?;
    let ce = SelfSimilarCE::new(1.5, 2).map_err(e)?;
    let p = &ce.profile;
    let tail_ok = p.behavior == TailBehavior::Decaying
        && p.u.last().unwrap().abs() <= tail_bound(p.y_max)
        && p.tail_constant(0.5 * p.y_max).is_finite();
    let times = with_member(&rows, "t");
    let scaled: Vec<f64> = times
        .iter()
        .map(|r| metric(r, "scaled_sup"))
        .collect::<Result<_, _>>()?;
    let f2: Vec<f64> = times
        .iter()
        .map(|r| metric(r, "f2_sup"))
        .collect::<Result<_, _>>()?;
    let (smin, smax) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let spread = smax / smin - 1.0;
    let f2_max = f2.iter().copied().fold(0.0, f64::max);
    let f2_bounded =
        f2.iter().all(|v| v.is_finite()) && f2_max <= 2.0 * f2[0].max(f64::MIN_POSITIVE);
    check(
        residual <= 1e-8 && tail_ok && times.len() == 4 && spread <= 0.01 && f2_bounded,
        format!(
            "α₀ {:.8}, ODE residual {residual:.1e}, t^σ‖u₂‖∞ spread {:.3}%, sup|f₂| {:?}",
            ce.alpha0,
            100.0 * spread,
            f2.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn u3_heat_forced() -> Outcome {
    let src = r#"
[run]
kind = "counterexample"
[grid]
d = 2
[counterexample]
which = "u3"
horizon = 0.03
exponents = [3.0, 5.0]
k_max = 14
"#;
    let rows = pipeline(src)?;
    let verdict = |q: f64| -> Result<LadderVerdict, String> {
        let r = rows
            .iter()
            .find(|r| r.member.get("scan_q").and_then(|v| v.as_f64()) == Some(q))
            .ok_or(format!("no scan at q = {q}"))?;
        serde_json::from_value(r.metrics["verdict"].clone()).map_err(e)
    };
    let (v3, v5) = (verdict(3.0)?, verdict(5.0)?);
    let ladder = with_member(&rows, "k");
    let du: Vec<f64> = ladder
        .iter()
        .map(|r| metric(r, "du3_sup"))
        .collect::<Result<_, _>>()?;
    let increasing = du.windows(2).all(|w| w[1] > w[0]);
    let last_k = ladder.last().and_then(|r| r.member["k"].as_i64());
    check(
        v3 == LadderVerdict::Convergent
            && v5 == LadderVerdict::Divergent
            && increasing
            && last_k == Some(14),
        format!(
            "q=3 {v3:?}, q=5 {v5:?}, du3_sup {:.4} → {:.4} over {} strictly increasing levels",
            du[0],
            du[du.len() - 1],
            du.len()
        ),
    )
}

fn grad_rho_threshold() -> Outcome {
    let mut hs = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for n in [16usize, 32, 64, 128] {
        let g = TorusGrid::new(2, n).map_err(e)?;
        let h = g.h();
        let tau = 0.02;
        let steps = (tau / (0.25 * h * h)).round() as usize;
        let mu = heat_adjoint_solve(
            CoefSchedule::Constant(CoefField::identity(g)),
            DiracApprox {
                center: 0,
                width: 1,
            }
            .field(&g)
            .map_err(e)?,
            TimeGrid::new(0.0, tau, steps).map_err(e)?,
        )
        .map_err(e)?;
        hs.push(h);
        a.push(grad_rho_norm(&mu, 1.1).map_err(e)?.value);
        b.push(grad_rho_norm(&mu, 1.5).map_err(e)?.value);
    }
    let (sa, sb) = (slope(&hs, &a)?, slope(&hs, &b)?);
    let last_change = (a[3] / a[2] - 1.0).abs();
    let grows = b.windows(2).all(|w| w[1] > w[0]);
    check(
        sa >= -0.1 && last_change <= 0.1 && grows && sb <= -0.25,
        format!(
            "‖Dρ‖_1.1 slope {sa:.3} (last change {:.1}%), ‖Dρ‖_1.5 slope {sb:.3}",
            100.0 * last_change
        ),
    )
}

fn time_holder() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for gamma in [1.5, 2.0, 4.0] {
        let (p, sol) = smooth_forward(1, 128, gamma, 0.1, 2048)?;
        let rho_tau = DiracApprox {
            center: 32,
            width: 1,
        }
        .field(p.grid())
        .map_err(e)?;
        let adj = adjoint(&p, &sol, rho_tau, FpMode::default())?;
        let fit = holder_exponent_fit(&adj.rho).map_err(e)?;
        let x = fit.exponent.ok_or("degenerate Hölder fit")?;
        let floor = (0.5f64).min(1.0 / gamma) - 0.1;
        ok &= x >= floor;
        parts.push(format!("γ={gamma}: {x:.3} (≥ {floor:.3})"));
    }
    check(ok, parts.join(", "))
}

/// `(γ, d, q, threshold, a priori, maximal branch, forcing, Lipschitz exponent)`.
type GateCase = (f64, usize, f64, f64, bool, bool, bool, f64);

const GATE_TABLE: [GateCase; 20] = [
    (1.5, 1, 3.5, 3.0, true, true, true, 1.5),
    (1.5, 1, 3.0, 3.0, false, true, false, 1.5),
    (2.0, 1, 4.0, 3.0, true, true, true, 3.0),
    (2.0, 2, 4.0, 4.0, false, true, false, 4.0),
    (2.0, 2, 4.5, 4.0, true, true, true, 4.0),
    (2.5, 2, 5.0, 4.0, true, true, false, 6.0),
    (2.5, 2, 6.0, 4.0, true, true, true, 6.0),
    (3.0, 1, 3.5, 3.0, true, true, false, 6.0),
    (3.0, 2, 8.0, 4.0, true, true, true, 8.0),
    (3.0, 3, 5.0, 5.0, false, true, false, 10.0),
    (3.5, 1, 3.75, 3.75, false, false, false, 7.5),
    (3.5, 1, 4.0, 3.75, true, false, false, 7.5),
    (4.0, 2, 6.0, 6.0, false, false, false, 12.0),
    (4.0, 2, 12.0, 6.0, true, false, true, 12.0),
    (5.0, 1, 6.5, 6.0, true, false, false, 12.0),
    (5.0, 3, 10.0, 10.0, false, false, false, 20.0),
    (5.0, 3, 20.0, 10.0, true, false, true, 20.0),
    (7.0, 2, 11.5, 12.0, false, false, false, 24.0),
    (1.25, 3, 5.5, 5.0, true, true, true, 1.25),
    (1.25, 2, 4.0, 4.0, false, true, false, 1.0),
];

fn gate_table() -> Outcome {
    let mut bad = Vec::new();
    for (i, &(gamma, d, q, thr, apriori, branch, forcing, lip)) in GATE_TABLE.iter().enumerate() {
        let g = exponent_gate(gamma, d, q, f64::INFINITY, f64::INFINITY).map_err(e)?;
        let got = (
            g.apriori_threshold,
            g.apriori_condition,
            g.maximal_regularity_branch,
            g.forcing_condition,
            g.lipschitz_exponent,
        );
        if got != (thr, apriori, branch, forcing, lip) || !g.aronson_serrin {
            bad.push(format!("case {i}: got {got:?}"));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "20/20 fixtures exact".into()
        } else {
            bad.join("; ")
        },
    )
}

fn bernstein() -> Outcome {
    let (p, sol) = smooth_forward(2, 32, 2.0, 0.02, 200)?;
    let ones = Trajectory::from_fn(*p.grid(), p.time, |_, _| 1.0).map_err(e)?;
    let r = bernstein_audit(&sol.u, &ones, &p, &BernsteinConfig::default()).map_err(e)?;
    let mut hs = Vec::new();
    let mut res = Vec::new();
    for n in [32usize, 64, 128] {
        let g = TorusGrid::new(1, n).map_err(e)?;
        let h = g.h();
        let t = 0.01;
        let steps = (t / (0.5 * h * h)).round() as usize;
        let lin = HJProblem::new(
            CoefSchedule::Constant(CoefField::identity(g)),
            PowerHamiltonian::constant(g, 2.0, 1.0, [0.0; 2]).map_err(e)?,
            Forcing::Zero,
            ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).map_err(e)?,
            TimeGrid::new(0.0, t, steps).map_err(e)?,
        )
        .map_err(e)?
        .pure_diffusion();
        let u = solve(&lin).map_err(e)?.u;
        let ones = Trajectory::from_fn(g, lin.time, |_, _| 1.0).map_err(e)?;
        let a = bernstein_audit(&u, &ones, &lin, &BernsteinConfig::default()).map_err(e)?;
        hs.push(h);
        res.push(a.z_residual_sup);
    }
    let s = slope(&hs, &res)?;
    check(
        r.pointwise_holds && r.ellipticity_max_rel_gap <= 1e-12 && s >= 0.9,
        format!(
            "identity gap {:.1e}, z-residual slope {s:.3} ({:.2e} → {:.2e})",
            r.ellipticity_max_rel_gap, res[0], res[2]
        ),
    )
}

/// Exact solution of the constant-coefficient adjoint problem, mode by mode:
/// `ρ̂_k(t) = ρ̂_k(τ) exp((−4π²k² + 2πi k v)(τ − t))` in one dimension.
fn fourier_oracle(rho_tau: &[f64], v: f64, elapsed: f64) -> Vec<f64> {
    let n = rho_tau.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let kk = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        let (mut re, mut im) = (0.0, 0.0);
        for (j, r) in rho_tau.iter().enumerate() {
            let th = -2.0 * PI * (k * j) as f64 / n as f64;
            re += r * th.cos();
            im += r * th.sin();
        }
        let decay = (-4.0 * PI * PI * kk * kk * elapsed).exp();
        let phase = 2.0 * PI * kk * v * elapsed;
        let (re, im) = (
            decay * (re * phase.cos() - im * phase.sin()),
            decay * (re * phase.sin() + im * phase.cos()),
        );
        for (j, o) in out.iter_mut().enumerate() {
            let th = 2.0 * PI * (k * j) as f64 / n as f64;
            *o += (re * th.cos() - im * th.sin()) / n as f64;
        }
    }
    out
}

fn oracle_error(n: usize, steps: usize, tau: f64) -> Result<f64, String> {
    let v = 0.5;
    let g = TorusGrid::new(1, n).map_err(e)?;
    let s2 = 0.1f64 * 0.1;
    let raw = ScalarField::from_fn(g, |x| {
        let r = g.displacement(g.nearest_cell(x), [0.0; 2])[0];
        (-r * r / (2.0 * s2)).exp()
    })
    .map_err(e)?;
    let rho_tau = raw.map(|x| x / raw.integral()).map_err(e)?;
    let fp = FPProblem::new(
        CoefSchedule::Constant(CoefField::identity(g)),
        Drift::Steady(VectorField::constant(g, [v, 0.0]).map_err(e)?),
        rho_tau.clone(),
        TimeGrid::new(0.0, tau, steps).map_err(e)?,
    )
    .map_err(e)?
    .with_mode(FpMode::FluxForm {
        flux: FluxScheme::Centered,
    })
    .with_limiter(false);
    let sol = solve_backward(&fp).map_err(e)?;
    let exact = fourier_oracle(rho_tau.values(), v, tau);
    let err: f64 = sol
        .rho
        .frame(0)
        .values()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        * g.h();
    Ok(err.sqrt())
}

fn oracle_equivalence() -> Outcome {
    let tau = 0.04;
    let ns = [32usize, 64, 128, 256];
    let mut hs = Vec::new();
    let mut eh = Vec::new();
    for n in ns {
        let h = 1.0 / n as f64;
        hs.push(h);
        eh.push(oracle_error(
            n,
            (tau / (0.5 * h * h)).round() as usize,
            tau,
        )?);
    }
    let mut dts = Vec::new();
    let mut et = Vec::new();
    for steps in [20usize, 40, 80, 160] {
        dts.push(tau / steps as f64);
        et.push(oracle_error(512, steps, tau)?);
    }
    let (sh, st) = (slope(&hs, &eh)?, slope(&dts, &et)?);
    check(
        sh >= 1.9 && st >= 0.9,
        format!("L² error slope {sh:.3} in h, {st:.3} in dt"),
    )
}

struct Criterion {
    name: &'static str,
    run: fn() -> Outcome,
    budget: Option<Duration>,
}

fn main() {
    let criteria = [
        Criterion {
            name: "discrete duality exactness",
            run: duality_exactness,
            budget: Some(Duration::from_secs(10)),
        },
        Criterion {
            name: "mass and positivity over the Dirac sweep",
            run: mass_and_positivity,
            budget: Some(Duration::from_secs(120)),
        },
        Criterion {
            name: "energy functional stability",
            run: energy_stability,
            budget: None,
        },
        Criterion {
            name: "regularization threshold",
            run: regularization_threshold,
            budget: None,
        },
        Criterion {
            name: "stationary counterexample sharpness",
            run: u1_sharpness,
            budget: None,
        },
        Criterion {
            name: "self-similar counterexample",
            run: u2_profile,
            budget: None,
        },
        Criterion {
            name: "heat-forced counterexample",
            run: u3_heat_forced,
            budget: Some(Duration::from_secs(300)),
        },
        Criterion {
            name: "gradient-of-density threshold",
            run: grad_rho_threshold,
            budget: None,
        },
        Criterion {
            name: "time-Hölder exponent",
            run: time_holder,
            budget: None,
        },
        Criterion {
            name: "exponent gate table",
            run: gate_table,
            budget: None,
        },
        Criterion {
            name: "Bernstein identity",
            run: bernstein,
            budget: None,
        },
        Criterion {
            name: "Fourier oracle equivalence",
            run: oracle_equivalence,
            budget: None,
        },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut out = (c.run)();
        let took = start.elapsed();
        if let (Ok(msg), Some(b)) = (&out, c.budget) {
            if took > b {
                out = Err(format!("{msg}; took {took:.1?}, budget {b:?}"));
            }
        }
        let (tag, msg) = match &out {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        failed += out.is_err() as usize;
        println!("{tag} {:>2} {}: {msg} [{took:.1?}]", i + 1, c.name);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
