//! Experiment configuration.
//!
//! A TOML document with the sections `[run] [grid] [problem] [adjoint]
//! [estimates] [sweep] [counterexample] [output]`; every section except
//! `[run]` is optional. Field slots (`u0`, `f`, `h`, `b`, `a`) take either an
//! expression in `x`, `y`, `t` (see [`Expr`]), one of the built-in names, or
//! `file:<path>` pointing at a field CSV. Expressions are evaluated at the
//! periodic displacement of each cell centre from the origin, so
//! `x, y ∈ [−1/2, 1/2)`.

use super::expr::Expr;
use crate::counterexamples::{HeatForcedCE, SelfSimilarCE, StationaryCE};
use crate::error::{Error, Result};
use crate::estimates::{exponent_gate, ExponentGate, Ramp};
use crate::fp::{FluxScheme, FpMode};
use crate::grid::{read_csv, ScalarField, TimeGrid, TorusGrid};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const BUILTINS: [&str; 6] = [
    "heat_mode",
    "sawtooth",
    "rough_sqrt_sin",
    "ce_u1",
    "ce_u2",
    "ce_u3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Hj,
    Fp,
    Duality,
    Bernstein,
    Counterexample,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub kind: RunKind,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(n) => vec![n],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub d: usize,
    /// Cells per axis; a list makes a refinement ladder.
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    pub t_final: f64,
    /// Fixed time step; otherwise `dt_factor · h^dt_power`.
    pub dt: Option<f64>,
    pub dt_factor: f64,
    pub dt_power: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            d: 1,
            n: vec![64],
            t_final: 0.1,
            dt: None,
            dt_factor: 0.25,
            dt_power: 1.0,
        }
    }
}

impl GridSection {
    pub fn time_grid(&self, n: usize) -> Result<TimeGrid> {
        let dt = self
            .dt
            .unwrap_or_else(|| self.dt_factor * (1.0 / n as f64).powf(self.dt_power));
        TimeGrid::with_max_step(0.0, self.t_final, dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub gamma: f64,
    /// Switches the Hamiltonian off (linear heat equation with source).
    pub hamiltonian: bool,
    pub h: String,
    pub b: Vec<String>,
    /// Scalar diffusion `a(x) I`.
    pub a: String,
    pub f: String,
    pub u0: String,
    /// Integrability exponent of `f` used by the hypothesis gate.
    pub q: f64,
    /// Drift integrability `(P, Q)` for the Aronson–Serrin check.
    pub drift_p: f64,
    pub drift_q: f64,
    /// Growth constant of `H`; certified from a sample cloud when absent.
    pub c_h: Option<f64>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            gamma: 2.0,
            hamiltonian: true,
            h: "1".into(),
            b: vec!["0".into(), "0".into()],
            a: "1".into(),
            f: "0".into(),
            u0: "heat_mode".into(),
            q: f64::INFINITY,
            drift_p: f64::INFINITY,
            drift_q: f64::INFINITY,
            c_h: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMode {
    Transpose,
    Upwind,
    Minmod,
    Centered,
}

impl AdjointMode {
    pub fn fp_mode(self) -> FpMode {
        match self {
            AdjointMode::Transpose => FpMode::Transpose,
            AdjointMode::Upwind => FpMode::FluxForm {
                flux: FluxScheme::Upwind,
            },
            AdjointMode::Minmod => FpMode::FluxForm {
                flux: FluxScheme::Minmod,
            },
            AdjointMode::Centered => FpMode::FluxForm {
                flux: FluxScheme::Centered,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjointSection {
    pub mode: AdjointMode,
    /// Terminal time of the adjoint problem; defaults to the horizon.
    pub tau: Option<f64>,
    /// Start of the representation-formula window.
    pub s: f64,
    pub center: [f64; 2],
    pub width: usize,
    pub limiter: bool,
    /// Exponents `q′` at which `‖Dρ‖_{L^{q′}}` is reported.
    pub grad_exponents: Vec<f64>,
}

impl Default for AdjointSection {
    fn default() -> Self {
        AdjointSection {
            mode: AdjointMode::Upwind,
            tau: None,
            s: 0.0,
            center: [0.0, 0.0],
            width: 1,
            limiter: true,
            grad_exponents: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatesSection {
    /// Times at which the Lipschitz seminorm of `u` is reported.
    pub lip_times: Vec<f64>,
    /// Ramp time for the weighted Lipschitz bound; enables it in sweeps.
    pub t1: Option<f64>,
    pub ramp: Ramp,
    pub lgamma: bool,
    pub bernstein_tol: f64,
    pub spike_threshold: f64,
}

impl Default for EstimatesSection {
    fn default() -> Self {
        EstimatesSection {
            lip_times: vec![],
            t1: None,
            ramp: Ramp::Smoothstep,
            lgamma: false,
            bernstein_tol: 1e-2,
            spike_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Dirac centres on a `lattice^d` lattice; zero uses `adjoint.center`.
    pub lattice: usize,
    /// Additional centres drawn uniformly with the run seed.
    pub random_centers: usize,
    pub widths: Vec<usize>,
    /// Difference-quotient directions for the weighted Lipschitz bound.
    pub axes: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lattice: 0,
            random_centers: 0,
            widths: vec![1],
            axes: vec![0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    U1,
    U2,
    U3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSection {
    pub which: Which,
    /// Defaults to `problem.gamma`.
    pub gamma: Option<f64>,
    /// Defaults to `grid.d`.
    pub d: Option<usize>,
    /// Time at which `ce_u2`/`ce_u3` fields are sampled.
    pub t_sample: f64,
    /// Horizon of the heat-forced construction.
    pub horizon: f64,
    /// Exponents for the integrability scans; defaults bracket the threshold.
    pub exponents: Vec<f64>,
    pub scan_depth: usize,
    /// Times for the self-similar scaling ladder.
    pub times: Vec<f64>,
    /// Last index of the `T − 2^{−k}` ladder.
    pub k_max: i32,
}

impl Default for CounterexampleSection {
    fn default() -> Self {
        CounterexampleSection {
            which: Which::U1,
            gamma: None,
            d: None,
            t_sample: 1e-2,
            horizon: 0.03,
            exponents: vec![],
            scan_depth: 40,
            times: vec![1e-1, 1e-2, 1e-3, 1e-4],
            k_max: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub ledger: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            ledger: PathBuf::from("ledger.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub adjoint: AdjointSection,
    #[serde(default)]
    pub estimates: EstimatesSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated configuration with its hash and hypothesis warnings.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub gate: ExponentGate,
    pub warnings: Vec<String>,
    /// Directory that relative `file:` references resolve against.
    pub base_dir: PathBuf,
}

/// Reads, validates and hashes a configuration file.
pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let src = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&src, &base)
}

pub fn parse_config_str(src: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let config: ExperimentConfig = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(src, s.start)).unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    LoadedConfig::new(config, base_dir)
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl LoadedConfig {
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        let errors = validate(&config, base_dir);
        match errors.len() {
            0 => {}
            1 => return Err(errors.into_iter().next().unwrap()),
            _ => return Err(Error::Invalid(errors)),
        }
        let p = &config.problem;
        let gate = exponent_gate(p.gamma, config.grid.d, p.q, p.drift_p, p.drift_q)?;
        let warnings = gate_warnings(&config, &gate);
        let hash = config_hash(&config)?;
        Ok(LoadedConfig {
            config,
            hash,
            gate,
            warnings,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn field_spec(&self, slot: &str, src: &str) -> Result<FieldSpec> {
        FieldSpec::parse(slot, src, &self.base_dir)
    }
}

fn verr(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn validate(c: &ExperimentConfig, base: &Path) -> Vec<Error> {
    let mut errs = Vec::new();
    let g = &c.grid;
    let p = &c.problem;
    if !(p.gamma > 1.0) || !p.gamma.is_finite() {
        errs.push(verr("problem.gamma", "gamma must exceed 1"));
    }
    if g.d == 0 || g.d > 2 {
        errs.push(verr(
            "grid.d",
            format!("dimension {} unsupported (1 or 2)", g.d),
        ));
    }
    if g.n.is_empty() || g.n.iter().any(|&n| n < crate::grid::MIN_CELLS) {
        errs.push(verr(
            "grid.n",
            format!(
                "every resolution must be at least {}",
                crate::grid::MIN_CELLS
            ),
        ));
    }
    if !(g.t_final > 0.0) {
        errs.push(verr("grid.t_final", "horizon must be positive"));
    }
    if let Some(dt) = g.dt {
        if !(dt > 0.0) {
            errs.push(verr("grid.dt", "time step must be positive"));
        }
    } else if !(g.dt_factor > 0.0) {
        errs.push(verr("grid.dt_factor", "must be positive"));
    }
    for (name, v) in [
        ("problem.q", p.q),
        ("problem.drift_p", p.drift_p),
        ("problem.drift_q", p.drift_q),
    ] {
        if !(v >= 1.0) {
            errs.push(verr(name, format!("exponent {v} must be at least 1")));
        }
    }
    if p.b.len() != 2 {
        errs.push(verr("problem.b", "drift needs two components"));
    }
    if let Some(ch) = p.c_h {
        if !(ch >= 1.0) {
            errs.push(verr("problem.c_h", "growth constant must be at least 1"));
        }
    }
    let slots = [
        ("problem.h", &p.h),
        ("problem.a", &p.a),
        ("problem.f", &p.f),
        ("problem.u0", &p.u0),
    ];
    for (slot, src) in slots
        .into_iter()
        .chain(p.b.iter().map(|s| ("problem.b", s)))
    {
        if let Err(e) = FieldSpec::parse(slot, src, base) {
            errs.push(e);
        }
    }
    let a = &c.adjoint;
    let tau = a.tau.unwrap_or(g.t_final);
    if !(tau > 0.0 && tau <= g.t_final + 1e-12) {
        errs.push(verr(
            "adjoint.tau",
            format!("tau = {tau} must lie in (0, t_final]"),
        ));
    }
    if !(a.s >= 0.0 && a.s < tau) {
        errs.push(verr(
            "adjoint.s",
            format!("s = {} must lie in [0, tau)", a.s),
        ));
    }
    if a.width == 0 {
        errs.push(verr("adjoint.width", "width must be at least 1"));
    }
    if a.grad_exponents.iter().any(|&q| !(q >= 1.0)) {
        errs.push(verr(
            "adjoint.grad_exponents",
            "exponents must be at least 1",
        ));
    }
    let e = &c.estimates;
    if e.lip_times.iter().any(|&t| !(t >= 0.0 && t <= g.t_final)) {
        errs.push(verr(
            "estimates.lip_times",
            "times must lie in [0, t_final]",
        ));
    }
    if let Some(t1) = e.t1 {
        if !(t1 > 0.0 && t1 < tau) {
            errs.push(verr("estimates.t1", "ramp time must lie in (0, tau)"));
        }
    }
    let s = &c.sweep;
    if s.widths.is_empty() || s.widths.contains(&0) {
        errs.push(verr("sweep.widths", "widths must be nonempty and positive"));
    }
    if s.axes.iter().any(|&k| k >= g.d.max(1)) {
        errs.push(verr("sweep.axes", "axis index out of range"));
    }
    let ce = &c.counterexample;
    if !(ce.t_sample > 0.0) {
        errs.push(verr("counterexample.t_sample", "must be positive"));
    }
    if !(ce.horizon > 0.0 && ce.horizon < 1.0) {
        errs.push(verr("counterexample.horizon", "must lie in (0, 1)"));
    }
    if ce.times.iter().any(|&t| !(t > 0.0)) {
        errs.push(verr("counterexample.times", "times must be positive"));
    }
    if let Some(gm) = ce.gamma {
        if !(gm > 1.0) {
            errs.push(verr("counterexample.gamma", "gamma must exceed 1"));
        }
    }
    errs
}

fn gate_warnings(c: &ExperimentConfig, gate: &ExponentGate) -> Vec<String> {
    let mut w = Vec::new();
    if !c.problem.hamiltonian {
        w.push("H disabled: linear heat equation, Hamiltonian hypotheses not exercised".into());
    }
    let dd = c.grid.d + 2;
    if !gate.forcing_condition {
        if gate.q <= dd as f64 {
            w.push(format!(
                "q = {} <= d+2 = {dd}: forcing outside the Lipschitz regularization hypothesis",
                gate.q
            ));
        } else {
            w.push(format!(
                "q = {} < (d+2)(gamma-1) = {}: forcing outside the Lipschitz regularization hypothesis",
                gate.q, gate.lipschitz_exponent
            ));
        }
    }
    if !gate.aronson_serrin {
        w.push(format!(
            "drift exponents (P, Q) = ({}, {}) fail d/(2P) + 1/Q <= 1/2",
            gate.p_space, gate.q_time
        ));
    }
    w
}

/// Canonical form used for hashing: expressions are re-printed so that
/// spacing and redundant parentheses do not change the hash.
fn canonical(c: &ExperimentConfig) -> ExperimentConfig {
    let mut c = c.clone();
    let norm = |s: &mut String| {
        if let Ok(e) = Expr::parse(s) {
            if !BUILTINS.contains(&s.trim()) {
                *s = e.to_string();
            }
        }
    };
    let p = &mut c.problem;
    for s in [&mut p.h, &mut p.a, &mut p.f, &mut p.u0] {
        norm(s);
    }
    for s in p.b.iter_mut() {
        norm(s);
    }
    c
}

/// SHA-256 of the canonical JSON serialization (object keys sorted).
pub fn config_hash(c: &ExperimentConfig) -> Result<String> {
    let v = serde_json::to_value(canonical(c))?;
    let s = serde_json::to_string(&v)?;
    Ok(hex::encode(Sha256::digest(s.as_bytes())))
}

/// Parsed content of a field slot.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Expr(Expr),
    Builtin(&'static str),
    File(PathBuf),
}

impl FieldSpec {
    pub fn parse(slot: &str, src: &str, base: &Path) -> Result<FieldSpec> {
        let s = src.trim();
        if let Some(b) = BUILTINS.iter().find(|b| **b == s) {
            return Ok(FieldSpec::Builtin(b));
        }
        if let Some(rest) = s.strip_prefix("file:") {
            let path = base.join(rest.trim());
            if !path.is_file() {
                return Err(verr(
                    slot,
                    format!("referenced file {} does not exist", path.display()),
                ));
            }
            return Ok(FieldSpec::File(path));
        }
        Expr::parse(s).map(FieldSpec::Expr).map_err(|e| match e {
            Error::Parse {
                column, message, ..
            } => verr(slot, format!("column {column}: {message}")),
            other => other,
        })
    }

    pub fn depends_on_t(&self) -> bool {
        match self {
            FieldSpec::Expr(e) => e.depends_on_t(),
            FieldSpec::Builtin(b) => *b == "ce_u2" || *b == "ce_u3",
            FieldSpec::File(_) => false,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            FieldSpec::Expr(e) => e.constant(),
            _ => None,
        }
    }
}

/// Counterexample parameters shared by the built-in fields.
#[derive(Debug, Clone, Copy)]
pub struct CeParams {
    pub gamma: f64,
    pub d: usize,
    pub t_sample: f64,
    pub horizon: f64,
}

impl CeParams {
    pub fn of(c: &ExperimentConfig) -> Self {
        CeParams {
            gamma: c.counterexample.gamma.unwrap_or(c.problem.gamma),
            d: c.counterexample.d.unwrap_or(c.grid.d),
            t_sample: c.counterexample.t_sample,
            horizon: c.counterexample.horizon,
        }
    }
}

/// Which member of a built-in pair a slot receives: the solution or its
/// forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Solution,
    Forcing,
}

impl FieldSpec {
    /// Samples the slot on `grid` at time `t`.
    pub fn sample(
        &self,
        grid: &TorusGrid,
        t: f64,
        role: Role,
        ce: &CeParams,
    ) -> Result<ScalarField> {
        match self {
            FieldSpec::Expr(e) => ScalarField::new(
                *grid,
                (0..grid.len())
                    .map(|i| {
                        let x = grid.displacement(i, [0.0; 2]);
                        e.eval(x[0], x[1], t)
                    })
                    .collect(),
            ),
            FieldSpec::File(p) => {
                let f = std::fs::File::open(p)?;
                let data = read_csv(std::io::BufReader::new(f))?.into_scalar()?;
                grid.check_same(data.grid())?;
                Ok(data)
            }
            FieldSpec::Builtin(name) => builtin(name, grid, t, role, ce),
        }
    }
}

fn radial_field(grid: &TorusGrid, f: impl Fn(f64) -> Result<f64>) -> Result<ScalarField> {
    let v = (0..grid.len())
        .map(|i| {
            let x = grid.displacement(i, [0.0; 2]);
            f(x[0].hypot(x[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    ScalarField::new(*grid, v)
}

fn builtin(name: &str, grid: &TorusGrid, t: f64, role: Role, ce: &CeParams) -> Result<ScalarField> {
    let d = grid.d();
    let xy = |i: usize| grid.displacement(i, [0.0; 2]);
    let from = |f: &dyn Fn([f64; 2]) -> f64| {
        ScalarField::new(*grid, (0..grid.len()).map(|i| f(xy(i))).collect())
    };
    match name {
        "heat_mode" => from(&|x| {
            let s = (2.0 * PI * x[0]).sin();
            if d == 2 {
                s * (2.0 * PI * x[1]).sin()
            } else {
                s
            }
        }),
        "sawtooth" => from(&|x| x[0]),
        "rough_sqrt_sin" => from(&|x| (PI * x[0]).sin().abs().sqrt()),
        "ce_u1" => {
            let s = StationaryCE::new(ce.gamma, d)?;
            match role {
                Role::Solution => s.u1_field(grid),
                Role::Forcing => s.f1_field(grid),
            }
        }
        "ce_u2" => {
            let s = SelfSimilarCE::new(ce.gamma, d)?;
            let ts = t + ce.t_sample;
            match role {
                Role::Solution => radial_field(grid, |r| s.u2_extrapolated(r, ts)),
                Role::Forcing => s.f2_field(grid, ts),
            }
        }
        "ce_u3" => {
            let h = HeatForcedCE::new(d, ce.horizon)?;
            match role {
                Role::Solution => h.u3_field(grid, ce.t_sample.min(0.5 * ce.horizon)),
                Role::Forcing => {
                    if t >= ce.horizon {
                        return ScalarField::constant(*grid, 0.0);
                    }
                    h.f3_field(grid, t)
                }
            }
        }
        _ => Err(Error::InvalidInput(format!("unknown built-in `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"
[run]
kind = "duality"

[grid]
d = 1
n = 32
t_final = 0.05

[problem]
hamiltonian = false
u0 = "heat_mode"

[adjoint]
mode = "transpose"
"#;

    fn load(src: &str) -> Result<LoadedConfig> {
        parse_config_str(src, Path::new("."))
    }

    #[test]
    fn minimal_heat_config() {
        let c = load(HEAT).unwrap();
        assert!(c.warnings.iter().any(|w| w.contains("H disabled")));
        assert_eq!(c.config.grid.n, vec![32]);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn gamma_below_one() {
        let src = HEAT.replace("hamiltonian = false", "gamma = 0.5");
        match load(&src) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "problem.gamma");
                assert_eq!(message, "gamma must exceed 1");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q_below_threshold_warns() {
        let src = HEAT
            .replace("d = 1", "d = 2")
            .replace("hamiltonian = false", "gamma = 2.0\nq = 3.0");
        let c = load(&src).unwrap();
        assert!(
            c.warnings.iter().any(|w| w.contains("q = 3 <= d+2 = 4")),
            "{:?}",
            c.warnings
        );
        assert!(!c.gate.forcing_condition);
    }

    #[test]
    fn parse_error_location() {
        let src = "[run]\nkind = \"hj\"\n[grid]\nn = \"many\"\n";
        match load(src) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let src = "[run]\nkind = \"hj\"\n[grid]\nbogus = 1\n";
        assert!(matches!(load(src), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn several_errors_reported_together() {
        let src = "[run]\nkind = \"hj\"\n[grid]\nd = 3\nt_final = -1.0\n[problem]\nu0 = \"sin(\"\n";
        match load(src) {
            Err(Error::Invalid(v)) => {
                let fields: Vec<String> = v
                    .iter()
                    .map(|e| match e {
                        Error::Validation { field, .. } => field.clone(),
                        e => e.to_string(),
                    })
                    .collect();
                assert!(fields.contains(&"grid.d".to_string()));
                assert!(fields.contains(&"grid.t_final".to_string()));
                assert!(fields.contains(&"problem.u0".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_reference() {
        let src = HEAT.replace("u0 = \"heat_mode\"", "u0 = \"file:does/not/exist.csv\"");
        assert!(matches!(load(&src), Err(Error::Validation { .. })));
    }

    #[test]
    fn hash_ignores_layout() {
        let a = load(HEAT).unwrap();
        let reordered = r#"
[adjoint]
mode = "transpose"
[problem]
u0 = "heat_mode"
hamiltonian = false
[grid]
t_final = 0.05
n = [32]
d = 1
[run]
kind = "duality"
"#;
        let b = load(reordered).unwrap();
        assert_eq!(a.hash, b.hash);
        let c = load(&HEAT.replace("u0 = \"heat_mode\"", "u0 = \"sin(2*pi*x)\"")).unwrap();
        let d = load(&HEAT.replace("u0 = \"heat_mode\"", "u0 = \"sin( 2 * pi * (x) )\"")).unwrap();
        assert_eq!(c.hash, d.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn builtin_fields() {
        let g = TorusGrid::new(1, 16).unwrap();
        let ce = CeParams {
            gamma: 2.0,
            d: 1,
            t_sample: 1e-2,
            horizon: 0.03,
        };
        let heat = FieldSpec::Builtin("heat_mode")
            .sample(&g, 0.0, Role::Solution, &ce)
            .unwrap();
        assert!((heat.get(4) - 1.0).abs() < 1e-15);
        let rough = FieldSpec::Builtin("rough_sqrt_sin")
            .sample(&g, 0.0, Role::Solution, &ce)
            .unwrap();
        assert_eq!(rough.get(0), 0.0);
        assert!((rough.get(8) - 1.0).abs() < 1e-15);
        let expr = FieldSpec::parse("u0", "sin(2*pi*x)", Path::new(".")).unwrap();
        let e = expr.sample(&g, 0.0, Role::Solution, &ce).unwrap();
        for i in 0..16 {
            assert!((e.get(i) - heat.get(i)).abs() < 1e-15);
        }
    }
}
