//! Experiment orchestration: builds the discrete problems from a config,
//! runs the requested pipeline for every member and records ledger rows.

use super::config::{
    AdjointMode, CeParams, ExperimentConfig, FieldSpec, LoadedConfig, Role, RunKind, Which,
};
use super::ledger::{LadderSpec, LedgerRow, RowError, RowStatus, RunLedger};
use crate::counterexamples::{HeatForcedCE, SelfSimilarCE, StationaryCE};
use crate::duality::{
    energy_functional, grad_rho_norm, holder_exponent_fit, representation_residual,
};
use crate::error::{Error, Result};
use crate::estimates::{
    bernstein_audit, exponent_gate, lgamma_gradient_bound, lipschitz_bound_terms, BernsteinConfig,
    LipBoundConfig, SweepMember,
};
use crate::fp::{solve_backward, DiracApprox, Drift, FPProblem, FPSolution};
use crate::grid::{lp_space_norm, CoefField, TimeGrid, TorusGrid, Trajectory, VectorField};
use crate::hamiltonian::PowerHamiltonian;
use crate::hj::{lipschitz_seminorm, solve, CoefSchedule, Forcing, HJProblem, HJSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Re-run members that already have an ok row.
    pub force: bool,
    /// Record wall-clock timestamps and durations (breaks bit-identical
    /// ledgers across reruns).
    pub timestamps: bool,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

type Metrics = BTreeMap<String, Value>;
type Shared<T> = std::result::Result<T, RowError>;

/// One unit of work inside an experiment.
#[derive(Debug, Clone)]
struct Member {
    key: BTreeMap<String, Value>,
    ladder: Option<LadderSpec>,
    task: Task,
}

#[derive(Debug, Clone)]
enum Task {
    Single {
        n: usize,
    },
    SweepMember {
        n: usize,
        center: [f64; 2],
        width: usize,
    },
    SweepBound {
        n: usize,
    },
    U1Grid {
        n: usize,
    },
    U1Scan {
        p: f64,
    },
    U2Profile,
    U2Time {
        t: f64,
        n: usize,
    },
    U3Scan {
        q: f64,
    },
    U3Ladder {
        k: i32,
    },
}

fn member_id(key: &BTreeMap<String, Value>) -> String {
    key.iter()
        .map(|(k, v)| format!("{k}={}", super::ledger::scalar_text(v)))
        .collect::<Vec<_>>()
        .join(",")
}

fn num(v: f64) -> Value {
    json!(v)
}

/// Runs every pending member of the experiment and appends the rows.
/// Failed members become failed rows; the returned rows are the new ones in
/// member order.
pub fn run_experiment(
    cfg: &LoadedConfig,
    opts: &RunOptions,
    ledger: &mut RunLedger,
) -> Result<Vec<LedgerRow>> {
    let members = plan(&cfg.config)?;
    let pending: Vec<Member> = members
        .into_iter()
        .filter(|m| opts.force || !ledger.completed(&run_id(cfg, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let rows = pool.install(|| execute(cfg, &pending, opts));
    ledger.append(rows.clone())?;
    Ok(rows)
}

fn run_id(cfg: &LoadedConfig, m: &Member) -> String {
    format!("{}:{}", &cfg.hash[..16], member_id(&m.key))
}

fn plan(c: &ExperimentConfig) -> Result<Vec<Member>> {
    let mut out = Vec::new();
    let ladder_n = c.grid.n.len() > 1;
    let key_n = |n: usize| BTreeMap::from([("n".to_string(), json!(n))]);
    match c.run.kind {
        RunKind::Hj | RunKind::Fp | RunKind::Duality | RunKind::Bernstein => {
            let quantities: Vec<String> = match c.run.kind {
                RunKind::Hj => vec!["lip_final".into(), "sup_final".into()],
                RunKind::Fp => {
                    let mut q = vec!["energy".to_string()];
                    q.extend(
                        c.adjoint
                            .grad_exponents
                            .iter()
                            .map(|e| format!("grad_rho_L{e}")),
                    );
                    q
                }
                RunKind::Duality => vec!["residual".into(), "energy".into()],
                _ => vec!["z_residual_sup".into(), "z_residual_l2".into()],
            };
            for &n in &c.grid.n {
                out.push(Member {
                    key: key_n(n),
                    ladder: ladder_n.then(|| LadderSpec {
                        group: kind_name(c.run.kind).into(),
                        x: "h".into(),
                        quantities: quantities.clone(),
                    }),
                    task: Task::Single { n },
                });
            }
        }
        RunKind::Sweep => {
            let centers = sweep_centers(c);
            for &n in &c.grid.n {
                for &center in &centers {
                    for &width in &c.sweep.widths {
                        let mut key = key_n(n);
                        key.insert("center".into(), json!(center));
                        key.insert("width".into(), json!(width));
                        out.push(Member {
                            key,
                            ladder: None,
                            task: Task::SweepMember { n, center, width },
                        });
                    }
                }
                if c.estimates.t1.is_some() {
                    let mut key = key_n(n);
                    key.insert("aggregate".into(), json!("weighted_lipschitz"));
                    out.push(Member {
                        key,
                        ladder: None,
                        task: Task::SweepBound { n },
                    });
                }
            }
        }
        RunKind::Counterexample => {
            let ce = &c.counterexample;
            let which = serde_json::to_value(ce.which)?;
            let with = |mut k: BTreeMap<String, Value>| {
                k.insert("which".into(), which.clone());
                k
            };
            match ce.which {
                Which::U1 => {
                    for &n in &c.grid.n {
                        out.push(Member {
                            key: with(key_n(n)),
                            ladder: ladder_n.then(|| LadderSpec {
                                group: "u1".into(),
                                x: "h".into(),
                                quantities: vec!["lip".into(), "residual_sup".into()],
                            }),
                            task: Task::U1Grid { n },
                        });
                    }
                    for &p in &ce.exponents {
                        out.push(Member {
                            key: with(BTreeMap::from([("scan_p".to_string(), json!(p))])),
                            ladder: None,
                            task: Task::U1Scan { p },
                        });
                    }
                }
                Which::U2 => {
                    out.push(Member {
                        key: with(BTreeMap::from([("profile".to_string(), json!(true))])),
                        ladder: None,
                        task: Task::U2Profile,
                    });
                    let n = c.grid.n[0];
                    for &t in &ce.times {
                        let mut key = key_n(n);
                        key.insert("t".into(), json!(t));
                        out.push(Member {
                            key: with(key),
                            ladder: Some(LadderSpec {
                                group: "u2".into(),
                                x: "t".into(),
                                quantities: vec![
                                    "scaled_sup".into(),
                                    "f2_sup".into(),
                                    "l2_norm".into(),
                                ],
                            }),
                            task: Task::U2Time { t, n },
                        });
                    }
                }
                Which::U3 => {
                    for &q in &ce.exponents {
                        out.push(Member {
                            key: with(BTreeMap::from([("scan_q".to_string(), json!(q))])),
                            ladder: None,
                            task: Task::U3Scan { q },
                        });
                    }
                    let d = ce.d.unwrap_or(c.grid.d);
                    let h = HeatForcedCE::new(d, ce.horizon)?;
                    for k in h.first_ladder_index()..=ce.k_max {
                        out.push(Member {
                            key: with(BTreeMap::from([("k".to_string(), json!(k))])),
                            ladder: Some(LadderSpec {
                                group: "u3".into(),
                                x: "eps".into(),
                                quantities: vec!["du3_sup".into()],
                            }),
                            task: Task::U3Ladder { k },
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn kind_name(k: RunKind) -> &'static str {
    match k {
        RunKind::Hj => "hj",
        RunKind::Fp => "fp",
        RunKind::Duality => "duality",
        RunKind::Bernstein => "bernstein",
        RunKind::Counterexample => "counterexample",
        RunKind::Sweep => "sweep",
    }
}

/// Lattice centres `(i + 1/2)/L` plus seeded uniform draws.
fn sweep_centers(c: &ExperimentConfig) -> Vec<[f64; 2]> {
    let d = c.grid.d;
    let l = c.sweep.lattice;
    let mut out = Vec::new();
    if l == 0 && c.sweep.random_centers == 0 {
        out.push(c.adjoint.center);
    }
    for i in 0..l {
        let x = (i as f64 + 0.5) / l as f64;
        if d == 1 {
            out.push([x, 0.0]);
        } else {
            for j in 0..l {
                out.push([x, (j as f64 + 0.5) / l as f64]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.run.seed);
    for _ in 0..c.sweep.random_centers {
        let x: f64 = rng.gen();
        let y: f64 = if d == 2 { rng.gen() } else { 0.0 };
        out.push([x, y]);
    }
    out
}

/// Forward solves shared by the members at one resolution.
struct Forward {
    problem: HJProblem,
    sol: HJSolution,
}

fn execute(cfg: &LoadedConfig, pending: &[Member], opts: &RunOptions) -> Vec<LedgerRow> {
    let c = &cfg.config;
    let needs_forward = matches!(
        c.run.kind,
        RunKind::Hj | RunKind::Fp | RunKind::Duality | RunKind::Bernstein | RunKind::Sweep
    );
    let mut ns: Vec<usize> = pending
        .iter()
        .filter_map(|m| match m.task {
            Task::Single { n } | Task::SweepMember { n, .. } | Task::SweepBound { n } => Some(n),
            _ => None,
        })
        .collect();
    ns.sort_unstable();
    ns.dedup();
    let forwards: BTreeMap<usize, Shared<Arc<Forward>>> = if needs_forward {
        ns.par_iter()
            .map(|&n| {
                let f = build_problem(cfg, n)
                    .and_then(|problem| solve(&problem).map(|sol| Forward { problem, sol }));
                (n, f.map(Arc::new).map_err(|e| RowError::from(&e)))
            })
            .collect()
    } else {
        BTreeMap::new()
    };
    // Sweep members feed the aggregate bound; they are kept per resolution.
    let keep_for_bound = c.estimates.t1.is_some();
    let results: Vec<(Shared<Metrics>, Option<SweepMember>, f64)> = pending
        .par_iter()
        .filter(|m| !matches!(m.task, Task::SweepBound { .. }))
        .map(|m| {
            let start = Instant::now();
            let (r, keep) = run_member(cfg, m, &forwards, keep_for_bound);
            (r, keep, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut by_n: BTreeMap<usize, Vec<SweepMember>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(pending.len());
    let mut it = results.into_iter();
    let base_gate = serde_json::to_value(cfg.gate).unwrap_or(Value::Null);
    let ce = CeParams::of(c);
    let ce_gate = exponent_gate(
        ce.gamma,
        ce.d,
        c.problem.q,
        c.problem.drift_p,
        c.problem.drift_q,
    )
    .ok()
    .and_then(|g| serde_json::to_value(g).ok())
    .unwrap_or(Value::Null);
    let gate = if c.run.kind == RunKind::Counterexample {
        ce_gate
    } else {
        base_gate
    };
    for m in pending {
        let (result, elapsed) = match m.task {
            Task::SweepBound { n } => {
                let start = Instant::now();
                let sweep = by_n.remove(&n).unwrap_or_default();
                let r = forward_of(&forwards, n)
                    .and_then(|fw| sweep_bound(cfg, &fw, &sweep).map_err(|e| RowError::from(&e)));
                (r, start.elapsed().as_secs_f64())
            }
            Task::SweepMember { n, .. } => {
                let (r, keep, e) = it.next().expect("one result per member");
                if let Some(s) = keep {
                    by_n.entry(n).or_default().push(s);
                }
                (r, e)
            }
            _ => {
                let (r, _, e) = it.next().expect("one result per member");
                (r, e)
            }
        };
        let (status, error, metrics) = match result {
            Ok(mtr) => (RowStatus::Ok, None, mtr),
            Err(e) => {
                log::warn!("member {} failed: {}", member_id(&m.key), e.message);
                (RowStatus::Failed, Some(e), Metrics::new())
            }
        };
        rows.push(LedgerRow {
            run_id: run_id(cfg, m),
            config_hash: cfg.hash.clone(),
            kind: kind_name(c.run.kind).into(),
            member: m.key.clone(),
            status,
            error,
            gate: gate.clone(),
            warnings: cfg.warnings.clone(),
            metrics,
            ladder: m.ladder.clone(),
            timestamp: opts.timestamps.then(now),
            elapsed_s: opts.timestamps.then_some(elapsed),
        });
    }
    rows
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn forward_of(forwards: &BTreeMap<usize, Shared<Arc<Forward>>>, n: usize) -> Shared<Arc<Forward>> {
    forwards.get(&n).cloned().unwrap_or_else(|| {
        Err(RowError::from(&Error::InvalidInput(format!(
            "no forward solve for n = {n}"
        ))))
    })
}

fn run_member(
    cfg: &LoadedConfig,
    m: &Member,
    forwards: &BTreeMap<usize, Shared<Arc<Forward>>>,
    keep: bool,
) -> (Shared<Metrics>, Option<SweepMember>) {
    let c = &cfg.config;
    let own = |r: Result<Metrics>| r.map_err(|e| RowError::from(&e));
    match m.task {
        Task::Single { n } => (
            forward_of(forwards, n).and_then(|fw| own(single(cfg, &fw))),
            None,
        ),
        Task::SweepMember { n, center, width } => {
            let r = forward_of(forwards, n).and_then(|fw| {
                sweep_member(cfg, &fw, center, width).map_err(|e| RowError::from(&e))
            });
            match r {
                Ok((mt, rho, cell)) => {
                    let kept = (keep && width == c.sweep.widths[0]).then(|| SweepMember {
                        center: cell,
                        axis: c.sweep.axes[0],
                        rho,
                    });
                    (Ok(mt), kept)
                }
                Err(e) => (Err(e), None),
            }
        }
        Task::SweepBound { .. } => unreachable!("aggregates run after the members"),
        Task::U1Grid { n } => (own(u1_grid(c, n)), None),
        Task::U1Scan { p } => (own(u1_scan(c, p)), None),
        Task::U2Profile => (own(u2_profile(c)), None),
        Task::U2Time { t, n } => (own(u2_time(c, t, n)), None),
        Task::U3Scan { q } => (own(u3_scan(c, q)), None),
        Task::U3Ladder { k } => (own(u3_ladder(c, k)), None),
    }
}

/// Builds the forward problem at resolution `n`.
pub fn build_problem(cfg: &LoadedConfig, n: usize) -> Result<HJProblem> {
    let c = &cfg.config;
    let p = &c.problem;
    let grid = TorusGrid::new(c.grid.d, n)?;
    let time = c.grid.time_grid(n)?;
    let ce = CeParams::of(c);
    let spec = |slot: &str, src: &str| cfg.field_spec(slot, src);
    let sample = |s: &FieldSpec, role| s.sample(&grid, 0.0, role, &ce);
    let a = sample(&spec("problem.a", &p.a)?, Role::Solution)?;
    let a = CoefField::new(grid, a.values().iter().map(|&v| [v, 0.0, v]).collect())?;
    let h = sample(&spec("problem.h", &p.h)?, Role::Solution)?;
    let b0 = sample(&spec("problem.b", &p.b[0])?, Role::Solution)?;
    let b1 = sample(&spec("problem.b", &p.b[1])?, Role::Solution)?;
    let b = VectorField::new(
        grid,
        b0.values()
            .iter()
            .zip(b1.values())
            .map(|(x, y)| [*x, *y])
            .collect(),
    )?;
    let ham = PowerHamiltonian::new(p.gamma, h, b)?;
    let fspec = spec("problem.f", &p.f)?;
    let f = match (&fspec, fspec.constant()) {
        (_, Some(v)) if v == 0.0 => Forcing::Zero,
        (FieldSpec::Expr(e), _) if e.depends_on_t() => {
            let e = e.clone();
            // The solver passes cell coordinates in [0, 1); expressions see
            // the same centred displacement as sampled fields.
            let wrap = |v: f64| v - v.round();
            Forcing::Function(Arc::new(move |x, t| e.eval(wrap(x[0]), wrap(x[1]), t)))
        }
        (s, _) if s.depends_on_t() => {
            let frames = (0..=time.n_steps())
                .map(|k| s.sample(&grid, time.time(k), Role::Forcing, &ce))
                .collect::<Result<Vec<_>>>()?;
            Forcing::Samples(Trajectory::new(time, frames)?)
        }
        (s, _) => Forcing::Steady(s.sample(&grid, 0.0, Role::Forcing, &ce)?),
    };
    let u0 = sample(&spec("problem.u0", &p.u0)?, Role::Solution)?;
    let prob = HJProblem::new(CoefSchedule::Constant(a), ham, f, u0, time)?;
    Ok(if p.hamiltonian {
        prob
    } else {
        prob.pure_diffusion()
    })
}

fn tau_level(c: &ExperimentConfig, time: &TimeGrid) -> usize {
    time.nearest_level(c.adjoint.tau.unwrap_or(c.grid.t_final))
        .max(1)
}

/// Adjoint solve from a Dirac box at `center` on the levels `0..=k_tau`.
fn adjoint(
    cfg: &LoadedConfig,
    fw: &Forward,
    center: [f64; 2],
    width: usize,
    mode: AdjointMode,
) -> Result<(FPSolution, Trajectory, usize)> {
    let c = &cfg.config;
    let grid = *fw.problem.grid();
    let k = tau_level(c, &fw.problem.time);
    let u = fw.sol.u.prefix(k)?;
    let cell = grid.nearest_cell(center);
    let rho_tau = DiracApprox {
        center: cell,
        width,
    }
    .field(&grid)?;
    let drift = Drift::Hamiltonian {
        ham: fw.problem.ham.clone(),
        u: u.clone(),
        hamiltonian_off: fw.problem.hamiltonian_off,
    };
    let fp = FPProblem::new(fw.problem.a.clone(), drift, rho_tau, *u.time_grid())?
        .with_mode(mode.fp_mode())
        .with_limiter(c.adjoint.limiter);
    Ok((solve_backward(&fp)?, u, cell))
}

fn hj_metrics(c: &ExperimentConfig, fw: &Forward, out: &mut Metrics) -> Result<()> {
    let g = fw.problem.grid();
    let u = &fw.sol.u;
    out.insert("h".into(), num(g.h()));
    out.insert("dt".into(), num(fw.problem.time.dt()));
    out.insert("steps".into(), json!(fw.problem.time.n_steps()));
    out.insert("lip_initial".into(), num(fw.sol.lipschitz[0]));
    out.insert(
        "lip_final".into(),
        num(*fw.sol.lipschitz.last().unwrap_or(&0.0)),
    );
    out.insert(
        "sup_final".into(),
        num(lp_space_norm(u.last(), f64::INFINITY)?),
    );
    out.insert("max_cfl_ratio".into(), num(fw.sol.max_cfl_ratio()));
    out.insert("f_clipped".into(), json!(fw.sol.f_clipped()));
    let mut lips = serde_json::Map::new();
    for &t in &c.estimates.lip_times {
        let k = fw.problem.time.nearest_level(t);
        lips.insert(format!("{t}"), num(lipschitz_seminorm(u.frame(k))));
    }
    if !lips.is_empty() {
        out.insert("lip_at".into(), Value::Object(lips));
    }
    Ok(())
}

fn growth_constant(c: &ExperimentConfig, fw: &Forward) -> Result<f64> {
    if let Some(v) = c.problem.c_h {
        return Ok(v);
    }
    let radius = 2.0 * fw.sol.lipschitz.iter().fold(1.0f64, |m, v| m.max(*v));
    Ok(fw.problem.ham.certify_bounds(radius, 4000)?.c_h)
}

fn single(cfg: &LoadedConfig, fw: &Forward) -> Result<Metrics> {
    let c = &cfg.config;
    let mut out = Metrics::new();
    hj_metrics(c, fw, &mut out)?;
    if c.estimates.lgamma {
        let ch = growth_constant(c, fw)?;
        let b = lgamma_gradient_bound(&fw.sol.u, &fw.problem, ch)?;
        out.insert("c_h".into(), num(ch));
        out.insert("lgamma".into(), serde_json::to_value(b)?);
    }
    match c.run.kind {
        RunKind::Hj => {}
        RunKind::Fp | RunKind::Duality | RunKind::Bernstein => {
            let mode = if c.run.kind == RunKind::Bernstein {
                AdjointMode::Transpose
            } else {
                c.adjoint.mode
            };
            let (fp, u, cell) = adjoint(cfg, fw, c.adjoint.center, c.adjoint.width, mode)?;
            out.insert("dirac_cell".into(), json!(cell));
            fp_metrics(c, &fp, &u, fw, &mut out)?;
            if c.run.kind == RunKind::Duality {
                let r = representation_residual(&u, &fp, &fw.problem, c.adjoint.s)?;
                out.insert("lhs".into(), num(r.lhs));
                out.insert("rhs".into(), num(r.rhs));
                out.insert("residual".into(), num(r.residual));
                out.insert("relative_residual".into(), num(r.relative_residual));
                out.insert("transpose_mode".into(), json!(r.metadata.transpose_mode));
            }
            if c.run.kind == RunKind::Bernstein {
                let bc = BernsteinConfig {
                    spike_threshold: c.estimates.spike_threshold,
                    tol: c.estimates.bernstein_tol,
                };
                let r = bernstein_audit(&u, &fp.rho, &fw.problem, &bc)?;
                if let Value::Object(m) = serde_json::to_value(r)? {
                    out.extend(m);
                }
            }
        }
        _ => unreachable!("single-run kinds only"),
    }
    Ok(out)
}

fn fp_metrics(
    c: &ExperimentConfig,
    fp: &FPSolution,
    u: &Trajectory,
    fw: &Forward,
    out: &mut Metrics,
) -> Result<()> {
    out.insert("mass_defect".into(), num(fp.mass_defect));
    out.insert("clipped_mass".into(), num(fp.clipped_mass));
    out.insert("min_before_clip".into(), num(fp.min_before_clip));
    out.insert(
        "rho_min".into(),
        num(fp
            .rho
            .frames()
            .iter()
            .map(|f| f.min())
            .fold(f64::INFINITY, f64::min)),
    );
    out.insert("fp_max_cfl_ratio".into(), num(fp.max_cfl_ratio));
    out.insert(
        "energy".into(),
        num(energy_functional(u, &fp.rho, &fw.problem.ham)?),
    );
    for &q in &c.adjoint.grad_exponents {
        let g = grad_rho_norm(&fp.rho, q)?;
        out.insert(format!("grad_rho_L{q}"), num(g.value));
    }
    if fp.rho.grid().d() == 1 && fp.rho.frames().len() >= 8 {
        let h = holder_exponent_fit(&fp.rho)?;
        out.insert(
            "holder_exponent".into(),
            h.exponent.map_or(Value::Null, num),
        );
        out.insert("holder_r2".into(), num(h.r_squared));
    }
    Ok(())
}

fn sweep_member(
    cfg: &LoadedConfig,
    fw: &Forward,
    center: [f64; 2],
    width: usize,
) -> Result<(Metrics, Trajectory, usize)> {
    let c = &cfg.config;
    let (fp, u, cell) = adjoint(cfg, fw, center, width, c.adjoint.mode)?;
    let mut out = Metrics::new();
    out.insert("h".into(), num(fw.problem.grid().h()));
    out.insert("dirac_cell".into(), json!(cell));
    fp_metrics(c, &fp, &u, fw, &mut out)?;
    let r = representation_residual(&u, &fp, &fw.problem, c.adjoint.s)?;
    out.insert("residual".into(), num(r.residual));
    Ok((out, fp.rho, cell))
}

fn sweep_bound(cfg: &LoadedConfig, fw: &Forward, sweep: &[SweepMember]) -> Result<Metrics> {
    let c = &cfg.config;
    let t1 = c.estimates.t1.ok_or(Error::MissingSweep)?;
    let mut members = Vec::new();
    for m in sweep {
        for &axis in &c.sweep.axes {
            members.push(SweepMember {
                center: m.center,
                axis,
                rho: m.rho.clone(),
            });
        }
    }
    let q = if c.problem.q.is_finite() {
        c.problem.q
    } else {
        1e12
    };
    let lc = LipBoundConfig::new(t1, c.estimates.ramp, q)?;
    let r = lipschitz_bound_terms(&fw.sol.u, &members, &fw.problem, &lc)?;
    let mut out = Metrics::new();
    out.insert("h".into(), num(fw.problem.grid().h()));
    out.insert("members".into(), json!(members.len()));
    out.insert("lhs".into(), num(r.lhs));
    out.insert("rhs_core".into(), num(r.rhs_core));
    out.insert("empirical_c".into(), num(r.empirical_c));
    out.insert("max_addends".into(), serde_json::to_value(r.max_addends)?);
    Ok(out)
}

fn ce_params(c: &ExperimentConfig) -> CeParams {
    CeParams::of(c)
}

fn u1_grid(c: &ExperimentConfig, n: usize) -> Result<Metrics> {
    let p = ce_params(c);
    let s = StationaryCE::new(p.gamma, p.d)?;
    let g = TorusGrid::new(p.d, n)?;
    let u = s.u1_field(&g)?;
    let res = s.discrete_residual(&g)?;
    let mut out = Metrics::new();
    out.insert("h".into(), num(g.h()));
    out.insert("lip".into(), num(lipschitz_seminorm(&u)));
    out.insert(
        "residual_sup".into(),
        num(lp_space_norm(&res, f64::INFINITY)?),
    );
    out.insert("f1_sup".into(), num(s.f1_sup(4096)));
    Ok(out)
}

fn scan_metrics(s: crate::counterexamples::LadderScan) -> Result<Metrics> {
    let mut out = Metrics::new();
    out.insert("exponent".into(), num(s.exponent));
    out.insert("verdict".into(), serde_json::to_value(s.verdict)?);
    out.insert("slope".into(), num(s.slope));
    out.insert(
        "last_partial".into(),
        num(*s.partial.last().unwrap_or(&0.0)),
    );
    Ok(out)
}

fn u1_scan(c: &ExperimentConfig, p_exp: f64) -> Result<Metrics> {
    let p = ce_params(c);
    let s = StationaryCE::new(p.gamma, p.d)?;
    scan_metrics(s.dph_lp_scan(p_exp, c.counterexample.scan_depth)?)
}

fn u2_profile(c: &ExperimentConfig) -> Result<Metrics> {
    let p = ce_params(c);
    let s = SelfSimilarCE::new(p.gamma, p.d)?;
    let mut out = Metrics::new();
    out.insert("alpha0".into(), num(s.alpha0));
    out.insert("sigma".into(), num(s.sigma));
    out.insert("ode_residual".into(), num(s.profile.max_step_error));
    out.insert("behavior".into(), serde_json::to_value(s.profile.behavior)?);
    out.insert("l2_window".into(), json!(s.l2_window));
    Ok(out)
}

fn u2_time(c: &ExperimentConfig, t: f64, n: usize) -> Result<Metrics> {
    let p = ce_params(c);
    let s = SelfSimilarCE::new(p.gamma, p.d)?;
    let g = TorusGrid::new(p.d, n)?;
    let u = s.u2_field(&g, t)?;
    let f = s.f2_field(&g, t)?;
    let sup = lp_space_norm(&u, f64::INFINITY)?;
    let mut out = Metrics::new();
    out.insert("t".into(), num(t));
    out.insert("sup".into(), num(sup));
    out.insert("scaled_sup".into(), num(sup * t.powf(s.sigma)));
    out.insert("f2_sup".into(), num(lp_space_norm(&f, f64::INFINITY)?));
    out.insert("l2_norm".into(), num(s.l2_norm(t)?));
    Ok(out)
}

fn u3_scan(c: &ExperimentConfig, q: f64) -> Result<Metrics> {
    let p = ce_params(c);
    let h = HeatForcedCE::new(p.d, p.horizon)?;
    scan_metrics(h.f3_lq_scan(q, c.counterexample.scan_depth.max(6))?)
}

fn u3_ladder(c: &ExperimentConfig, k: i32) -> Result<Metrics> {
    let p = ce_params(c);
    let h = HeatForcedCE::new(p.d, p.horizon)?;
    let eps = 2f64.powi(-k);
    let t = p.horizon - eps;
    let mut out = Metrics::new();
    out.insert("eps".into(), num(eps));
    out.insert("t".into(), num(t));
    out.insert("du3_sup".into(), num(h.du3_sup(t)?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::parse_config_str;
    use std::path::Path;

    fn load(src: &str) -> LoadedConfig {
        parse_config_str(src, Path::new(".")).unwrap()
    }

    const DUALITY: &str = r#"
[run]
kind = "duality"
[grid]
d = 1
n = [32, 64]
t_final = 0.05
dt_factor = 0.5
dt_power = 2.0
[problem]
gamma = 2.0
u0 = "0.3*sin(2*pi*x)"
[adjoint]
mode = "transpose"
"#;

    #[test]
    fn duality_rows_are_exact_and_deterministic() {
        let cfg = load(DUALITY);
        let mut l = RunLedger::new();
        let rows = run_experiment(&cfg, &RunOptions::default(), &mut l).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.is_ok(), "{:?}", r.error);
            assert!(r.metric("residual").unwrap() <= 1e-10);
            assert!(r.gate.is_object());
        }
        let mut l2 = RunLedger::new();
        let again = run_experiment(&cfg, &RunOptions::default(), &mut l2).unwrap();
        let a: Vec<String> = rows
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let b: Vec<String> = again
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        assert_eq!(a, b);
        // Completed members are skipped unless forced.
        let skipped = run_experiment(&cfg, &RunOptions::default(), &mut l).unwrap();
        assert!(skipped.is_empty());
        let forced = RunOptions {
            force: true,
            ..Default::default()
        };
        assert_eq!(run_experiment(&cfg, &forced, &mut l).unwrap().len(), 2);
    }

    #[test]
    fn failures_become_rows() {
        let src = DUALITY
            .replace("dt_factor = 0.5\ndt_power = 2.0", "dt = 0.05")
            .replace("gamma = 2.0", "gamma = 4.0")
            .replace("0.3*sin", "3*sin");
        let cfg = load(&src);
        let mut l = RunLedger::new();
        let rows = run_experiment(&cfg, &RunOptions::default(), &mut l).unwrap();
        assert!(rows.iter().all(|r| !r.is_ok()));
        assert_eq!(rows[0].error.as_ref().unwrap().tag, "CFLViolation");
    }

    #[test]
    fn seeded_centres_are_reproducible() {
        let src = r#"
[run]
kind = "sweep"
seed = 11
[grid]
d = 2
[sweep]
lattice = 2
random_centers = 3
"#;
        let c = load(src).config;
        let a = sweep_centers(&c);
        assert_eq!(a.len(), 7);
        assert_eq!(a, sweep_centers(&c));
        let mut other = c.clone();
        other.run.seed = 12;
        assert_ne!(a, sweep_centers(&other));
    }

    #[test]
    fn u1_ladder_rows() {
        let src = r#"
[run]
kind = "counterexample"
[grid]
d = 2
n = [32, 64]
[counterexample]
which = "u1"
gamma = 3.0
"#;
        let cfg = load(src);
        let rows = run_experiment(&cfg, &RunOptions::default(), &mut RunLedger::new()).unwrap();
        assert_eq!(rows.len(), 2);
        let l0 = rows[0].metric("lip").unwrap();
        let l1 = rows[1].metric("lip").unwrap();
        assert!(l1 > l0);
    }
}
