//! The power-law Hamiltonian `H(x,p) = h(x)|p|^γ + b(x)·p`, its derivatives,
//! Legendre transform and numeric certificates for the growth conditions.

use crate::error::{Error, Result};
use crate::grid::{gradient_central, ScalarField, TorusGrid, VectorField};
use serde::{Deserialize, Serialize};

/// Below this norm the gradient `D_pH` is treated as evaluated at the origin.
pub const SINGULAR_P: f64 = 1e-300;

/// Certificates with a constant above this are flagged as drift dominated.
pub const DRIFT_DOMINATED_C: f64 = 10.0;

const CERT_LIMIT: f64 = 1e6;

pub fn conjugate_exponent(gamma: f64) -> f64 {
    gamma / (gamma - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianValue {
    pub value: f64,
    pub maximizer: [f64; 2],
}

/// Any convex Hamiltonian sampled on a torus grid. The Legendre transform
/// defaults to brute-force maximization over a polar `p`-grid.
pub trait ConvexHamiltonian {
    fn grid(&self) -> &TorusGrid;

    fn eval(&self, x: usize, p: [f64; 2]) -> f64;

    /// Radius of the `p`-grid used by the numeric transform.
    fn legendre_radius(&self) -> f64 {
        50.0
    }

    fn legendre(&self, x: usize, nu: [f64; 2]) -> LagrangianValue {
        numeric_legendre(self, x, nu, self.legendre_radius(), 2048, 64)
    }
}

/// `sup_p { p·ν − H(x,p) }` over `n_r` radii in `[0, r_max]` and `n_theta`
/// directions (two directions in one dimension).
pub fn numeric_legendre<H: ConvexHamiltonian + ?Sized>(
    ham: &H,
    x: usize,
    nu: [f64; 2],
    r_max: f64,
    n_r: usize,
    n_theta: usize,
) -> LagrangianValue {
    let d = ham.grid().d();
    let dirs: Vec<[f64; 2]> = if d == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..n_theta)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    let mut best = LagrangianValue {
        value: -ham.eval(x, [0.0; 2]),
        maximizer: [0.0; 2],
    };
    for j in 1..=n_r {
        let r = r_max * j as f64 / n_r as f64;
        for e in &dirs {
            let p = [r * e[0], r * e[1]];
            let v = p[0] * nu[0] + p[1] * nu[1] - ham.eval(x, p);
            if v > best.value {
                best = LagrangianValue {
                    value: v,
                    maximizer: p,
                };
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct PowerHamiltonian {
    gamma: f64,
    h: ScalarField,
    b: VectorField,
    h0: f64,
    shift: f64,
    dh: VectorField,
    /// `db[i][k][j] = ∂_k b_j` at cell `i`.
    db: Vec<[[f64; 2]; 2]>,
}

impl PowerHamiltonian {
    pub fn new(gamma: f64, h: ScalarField, b: VectorField) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::BadExponent {
                value: gamma,
                reason: "the Hamiltonian exponent must exceed 1",
            });
        }
        h.grid().check_same(b.grid())?;
        let h0 = h.min();
        if !(h0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "h must be bounded below by a positive constant, min is {h0}"
            )));
        }
        let grid = *h.grid();
        let dh = gradient_central(&h);
        let grads: Vec<VectorField> = (0..grid.d())
            .map(|j| gradient_central(&b.component(j)))
            .collect();
        let db = (0..grid.len())
            .map(|i| {
                let mut m = [[0.0; 2]; 2];
                for (j, gj) in grads.iter().enumerate() {
                    let v = gj.get(i);
                    m[0][j] = v[0];
                    m[1][j] = v[1];
                }
                m
            })
            .collect();
        let gp = conjugate_exponent(gamma);
        let k = lagrangian_factor(gamma);
        let shift = (0..grid.len())
            .map(|i| {
                let bb = b.get(i);
                k * h.get(i).powf(1.0 - gp) * bb[0].hypot(bb[1]).powf(gp)
            })
            .fold(0.0, f64::max);
        Ok(PowerHamiltonian {
            gamma,
            h,
            b,
            h0,
            shift,
            dh,
            db,
        })
    }

    /// Spatially constant `h` and `b`.
    pub fn constant(grid: TorusGrid, gamma: f64, h: f64, b: [f64; 2]) -> Result<Self> {
        Self::new(
            gamma,
            ScalarField::constant(grid, h)?,
            VectorField::constant(grid, b)?,
        )
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_prime(&self) -> f64 {
        conjugate_exponent(self.gamma)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.h.grid()
    }

    pub fn h(&self) -> &ScalarField {
        &self.h
    }

    pub fn b(&self) -> &VectorField {
        &self.b
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    /// Additive constant making `H ≥ 0`; zero when `b ≡ 0`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn has_drift(&self) -> bool {
        !self.b.is_zero()
    }

    /// `h(x)|p|^γ + b(x)·p` without the normalizing shift.
    pub fn eval_h_raw(&self, x: usize, p: [f64; 2]) -> f64 {
        let b = self.b.get(x);
        self.h.get(x) * p[0].hypot(p[1]).powf(self.gamma) + b[0] * p[0] + b[1] * p[1]
    }

    pub fn eval_h(&self, x: usize, p: [f64; 2]) -> f64 {
        self.eval_h_raw(x, p) + self.shift
    }

    /// `γ h |p|^{γ−2} p + b`. At `p = 0` with `γ < 2` returns `b(x)` and
    /// `true` for the singular flag.
    pub fn eval_dph_flagged(&self, x: usize, p: [f64; 2]) -> ([f64; 2], bool) {
        let b = self.b.get(x);
        let r = p[0].hypot(p[1]);
        if r <= SINGULAR_P {
            return (b, self.gamma < 2.0);
        }
        let s = self.gamma * self.h.get(x) * r.powf(self.gamma - 2.0);
        ([s * p[0] + b[0], s * p[1] + b[1]], false)
    }

    pub fn eval_dph(&self, x: usize, p: [f64; 2]) -> Result<[f64; 2]> {
        match self.eval_dph_flagged(x, p) {
            (_, true) => Err(Error::SingularGradient {
                norm: p[0].hypot(p[1]),
            }),
            (v, false) => Ok(v),
        }
    }

    /// `Dh(x)|p|^γ + Db(x)ᵀ p` with centred differences of `h` and `b`.
    pub fn eval_dxh(&self, x: usize, p: [f64; 2]) -> [f64; 2] {
        let a = p[0].hypot(p[1]).powf(self.gamma);
        let dh = self.dh.get(x);
        let db = &self.db[x];
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            *o = dh[k] * a + db[k][0] * p[0] + db[k][1] * p[1];
        }
        out
    }

    /// Closed-form transform: `(γ−1)γ^{−γ′} h^{1−γ′} |ν−b|^{γ′} − shift`.
    pub fn legendre(&self, x: usize, nu: [f64; 2]) -> LagrangianValue {
        let b = self.b.get(x);
        let w = [nu[0] - b[0], nu[1] - b[1]];
        let r = w[0].hypot(w[1]);
        let hx = self.h.get(x);
        let gp = self.gamma_prime();
        let value = lagrangian_factor(self.gamma) * hx.powf(1.0 - gp) * r.powf(gp) - self.shift;
        let maximizer = if r == 0.0 {
            [0.0; 2]
        } else {
            let m = (r / (self.gamma * hx)).powf(1.0 / (self.gamma - 1.0));
            [m * w[0] / r, m * w[1] / r]
        };
        LagrangianValue { value, maximizer }
    }

    /// `D_x L(x, ν)` in closed form.
    pub fn eval_dxl(&self, x: usize, nu: [f64; 2]) -> [f64; 2] {
        let b = self.b.get(x);
        let w = [nu[0] - b[0], nu[1] - b[1]];
        let r = w[0].hypot(w[1]);
        let hx = self.h.get(x);
        let gp = self.gamma_prime();
        let k = lagrangian_factor(self.gamma);
        let dh = self.dh.get(x);
        let db = &self.db[x];
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let from_h = k * (1.0 - gp) * hx.powf(-gp) * dh[c] * r.powf(gp);
            let from_b = if r == 0.0 {
                0.0
            } else {
                let dbw = db[c][0] * w[0] + db[c][1] * w[1];
                -k * gp * hx.powf(1.0 - gp) * r.powf(gp - 2.0) * dbw
            };
            *o = from_h + from_b;
        }
        out
    }

    /// `|H(x,p) − (ν·p − L(x,ν))|` with `ν = D_pH(x,p)`.
    pub fn conjugacy_check(&self, x: usize, p: [f64; 2]) -> f64 {
        let (nu, _) = self.eval_dph_flagged(x, p);
        let l = self.legendre(x, nu).value;
        (self.eval_h(x, p) - (nu[0] * p[0] + nu[1] * p[1] - l)).abs()
    }

    /// Smallest constants (by bisection) for which the growth conditions hold
    /// on a quasi-random cloud of `(x, p)` with `|p| ≤ sample_radius`.
    pub fn certify_bounds(
        &self,
        sample_radius: f64,
        n_samples: usize,
    ) -> Result<HBoundsCertificate> {
        if n_samples < 1000 {
            return Err(Error::InsufficientSamples {
                needed: 1000,
                got: n_samples,
            });
        }
        if !(sample_radius > 0.0) {
            return Err(Error::InvalidInput("sample_radius must be positive".into()));
        }
        let g = self.gamma;
        let cloud = sample_cloud(self.grid(), sample_radius, n_samples);
        let mut hs = Vec::with_capacity(cloud.len());
        let mut min_h = f64::INFINITY;
        let mut max_dp: f64 = 0.0;
        for &(x, p) in &cloud {
            let r = p[0].hypot(p[1]);
            let hv = self.eval_h(x, p);
            let (dp, _) = self.eval_dph_flagged(x, p);
            let dpn = dp[0].hypot(dp[1]);
            let dx = self.eval_dxh(x, p);
            min_h = min_h.min(hv);
            max_dp = max_dp.max(dpn);
            hs.push(HSample {
                a: r.powf(g),
                g: r.powf(g - 1.0),
                h: hv,
                euler: dp[0] * p[0] + dp[1] * p[1] - hv,
                dx: dx[0].hypot(dx[1]),
                dp: dpn,
            });
        }
        let c_h = bisect_constant(|c| hs.iter().all(|s| s.holds(c)))
            .ok_or(Error::CertificateFailed { limit: CERT_LIMIT })?;

        let gp = self.gamma_prime();
        let nu_cloud = sample_cloud(self.grid(), max_dp.max(1.0), n_samples);
        let ls: Vec<LSample> = nu_cloud
            .iter()
            .map(|&(x, nu)| {
                let dxl = self.eval_dxl(x, nu);
                LSample {
                    a: nu[0].hypot(nu[1]).powf(gp),
                    l: self.legendre(x, nu).value,
                    dx: dxl[0].hypot(dxl[1]),
                }
            })
            .collect();
        let c_l = bisect_constant(|c| ls.iter().all(|s| s.holds(c)));

        Ok(HBoundsCertificate {
            c_h,
            c_l,
            gamma_prime: gp,
            sample_radius,
            n_samples: cloud.len(),
            shift: self.shift,
            min_h_on_cloud: min_h,
            drift_dominated: c_h > DRIFT_DOMINATED_C,
        })
    }
}

impl ConvexHamiltonian for PowerHamiltonian {
    fn grid(&self) -> &TorusGrid {
        self.h.grid()
    }

    fn eval(&self, x: usize, p: [f64; 2]) -> f64 {
        self.eval_h(x, p)
    }

    fn legendre(&self, x: usize, nu: [f64; 2]) -> LagrangianValue {
        PowerHamiltonian::legendre(self, x, nu)
    }
}

fn lagrangian_factor(gamma: f64) -> f64 {
    (gamma - 1.0) * gamma.powf(-conjugate_exponent(gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBoundsCertificate {
    pub c_h: f64,
    /// `None` when no constant up to the search limit satisfies the
    /// Lagrangian bounds on the `ν`-cloud.
    pub c_l: Option<f64>,
    pub gamma_prime: f64,
    pub sample_radius: f64,
    pub n_samples: usize,
    pub shift: f64,
    pub min_h_on_cloud: f64,
    pub drift_dominated: bool,
}

struct HSample {
    a: f64,
    g: f64,
    h: f64,
    euler: f64,
    dx: f64,
    dp: f64,
}

impl HSample {
    fn holds(&self, c: f64) -> bool {
        const TOL: f64 = 1e-12;
        let slack = TOL * (1.0 + self.a + self.h.abs());
        self.a / c - c <= self.h + slack
            && self.h <= c * (self.a + 1.0) + slack
            && self.euler + slack >= self.a / c - c
            && self.dx <= c * (self.a + 1.0) + slack
            && self.g / c - c <= self.dp + slack
            && self.dp <= c * self.g + c + slack
    }
}

struct LSample {
    a: f64,
    l: f64,
    dx: f64,
}

impl LSample {
    fn holds(&self, c: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.a + self.l.abs());
        self.a / c - c <= self.l + slack
            && self.l <= c * self.a + slack
            && self.dx <= c * (self.a + 1.0) + slack
    }
}

/// Smallest `C ∈ [1, 1e6]` with `ok(C)`, assuming monotonicity in `C`.
fn bisect_constant(ok: impl Fn(f64) -> bool) -> Option<f64> {
    if ok(1.0) {
        return Some(1.0);
    }
    if !ok(CERT_LIMIT) {
        return None;
    }
    let (mut lo, mut hi) = (1.0f64, CERT_LIMIT);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Some(hi)
}

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton cloud of `(cell, vector)` pairs with vectors in the ball of radius
/// `radius`, plus the origin and the sphere `|p| = radius` in (up to 4096) cells.
pub(crate) fn sample_cloud(grid: &TorusGrid, radius: f64, n: usize) -> Vec<(usize, [f64; 2])> {
    let d = grid.d();
    let mut out = Vec::with_capacity(n + 9 * grid.len());
    for i in 1..=n {
        let x = ((halton(i, 2) * grid.len() as f64) as usize).min(grid.len() - 1);
        let r = radius * halton(i, 3);
        let p = if d == 1 {
            [if halton(i, 5) < 0.5 { -r } else { r }, 0.0]
        } else {
            let th = 2.0 * std::f64::consts::PI * halton(i, 5);
            [r * th.cos(), r * th.sin()]
        };
        out.push((x, p));
    }
    let dirs = if d == 1 { 2 } else { 8 };
    let stride = (grid.len() / 4096).max(1);
    for x in (0..grid.len()).step_by(stride) {
        out.push((x, [0.0; 2]));
        for k in 0..dirs {
            let th = 2.0 * std::f64::consts::PI * k as f64 / dirs as f64;
            let p = if d == 1 {
                [radius * th.cos().signum(), 0.0]
            } else {
                [radius * th.cos(), radius * th.sin()]
            };
            out.push((x, p));
        }
    }
    out
}
