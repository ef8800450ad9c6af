use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const BLOW_UP: f64 = 1e6;

/// How a shot profile leaves the exponential tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailBehavior {
    /// `|U(Y)| ≤ 1e-6 e^{5−Y}` without a sign change.
    Decaying,
    /// Stays positive with a slow (algebraic) tail: `α₀` below the target.
    Diverging,
    /// Crosses zero before `Y`: `α₀` above the target.
    Oscillating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// First point off the singular origin; the series start is used there.
    pub y_start: f64,
    /// Drops `|U′|^γ` (linearized equation).
    pub linear: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            rtol: 1e-11,
            atol: 1e-13,
            h_max: 0.05,
            y_start: 1e-6,
            linear: false,
        }
    }
}

/// Tabulated solution of
/// `U″ + ((d−1)/y + y/2) U′ + σU + |U′|^γ = 0`, `U(0) = α₀`, `U′(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub gamma: f64,
    pub d: usize,
    pub sigma: f64,
    pub alpha0: f64,
    pub y_max: f64,
    pub linear: bool,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    pub behavior: TailBehavior,
    /// Largest embedded error estimate over accepted steps.
    pub max_step_error: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Self-similar exponent `(2−γ)/(2(γ−1))`.
pub fn sigma_of(gamma: f64) -> f64 {
    (2.0 - gamma) / (2.0 * (gamma - 1.0))
}

/// The profile equation makes sense for `1 < γ < 2`.
pub(crate) fn check_window(gamma: f64, d: usize) -> Result<()> {
    if d == 0 || d > 3 {
        return Err(Error::DimensionUnsupported(d));
    }
    if !(gamma > 1.0 && gamma < 2.0) {
        return Err(Error::BadGamma(gamma));
    }
    Ok(())
}

/// `γ > 1 + 2/(d+2)`: the self-similar solution vanishes in `L²` as
/// `t → 0`.
pub fn in_l2_window(gamma: f64, d: usize) -> bool {
    gamma > 1.0 + 2.0 / (d as f64 + 2.0) && gamma < 2.0
}

struct Rhs {
    d: f64,
    sigma: f64,
    gamma: f64,
    linear: bool,
}

impl Rhs {
    fn second(&self, y: f64, u: f64, v: f64) -> f64 {
        let nl = if self.linear {
            0.0
        } else {
            v.abs().powf(self.gamma)
        };
        -((self.d - 1.0) / y + 0.5 * y) * v - self.sigma * u - nl
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One DP5 step; returns the fifth-order state and the error estimate.
fn dp_step(rhs: &Rhs, y: f64, s: [f64; 2], h: f64) -> ([f64; 2], [f64; 2]) {
    let mut k = [[0.0; 2]; 7];
    for i in 0..7 {
        let mut st = s;
        for (j, kj) in k.iter().enumerate().take(i) {
            st[0] += h * A[i][j] * kj[0];
            st[1] += h * A[i][j] * kj[1];
        }
        let yy = y + C[i] * h;
        k[i] = [st[1], rhs.second(yy, st[0], st[1])];
    }
    let mut hi = s;
    let mut err = [0.0; 2];
    for i in 0..7 {
        for c in 0..2 {
            hi[c] += h * B5[i] * k[i][c];
            err[c] += h * (B5[i] - B4[i]) * k[i][c];
        }
    }
    (hi, err)
}

pub fn shoot_ode(gamma: f64, d: usize, alpha0: f64, y_max: f64) -> Result<RadialProfile> {
    shoot_ode_with(gamma, d, alpha0, y_max, &ShootOptions::default())
}

/// Integrates from the series start `U ≈ α₀ + U″(0) y²/2`,
/// `U″(0) = −σα₀/d`, to `y_max` with adaptive DP5 steps.
pub fn shoot_ode_with(
    gamma: f64,
    d: usize,
    alpha0: f64,
    y_max: f64,
    opts: &ShootOptions,
) -> Result<RadialProfile> {
    check_window(gamma, d)?;
    if !(alpha0 >= 0.0) || !alpha0.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha0 = {alpha0} must be nonnegative"
        )));
    }
    if !(y_max > opts.y_start) {
        return Err(Error::InvalidInput(format!("y_max = {y_max} too small")));
    }
    let sigma = sigma_of(gamma);
    let rhs = Rhs {
        d: d as f64,
        sigma,
        gamma,
        linear: opts.linear,
    };
    let u2 = -sigma * alpha0 / d as f64;
    let mut y = vec![0.0];
    let mut u = vec![alpha0];
    let mut du = vec![0.0];
    let mut d2u = vec![u2];
    let mut yc = opts.y_start;
    let mut s = [alpha0 + 0.5 * u2 * yc * yc, u2 * yc];
    let push = |yc: f64,
                s: [f64; 2],
                y: &mut Vec<f64>,
                u: &mut Vec<f64>,
                du: &mut Vec<f64>,
                d2u: &mut Vec<f64>| {
        y.push(yc);
        u.push(s[0]);
        du.push(s[1]);
        d2u.push(rhs.second(yc, s[0], s[1]));
    };
    push(yc, s, &mut y, &mut u, &mut du, &mut d2u);
    let mut h = opts.y_start;
    let mut max_step_error: f64 = 0.0;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    while yc < y_max {
        h = h.min(opts.h_max).min(y_max - yc);
        let (next, err) = dp_step(&rhs, yc, s, h);
        let scale = |c: usize| opts.atol + opts.rtol * s[c].abs().max(next[c].abs());
        let en = (err[0] / scale(0)).abs().max((err[1] / scale(1)).abs());
        if !en.is_finite() {
            return Err(Error::BlowUp {
                y: yc,
                value: next[0],
            });
        }
        if en <= 1.0 {
            accepted += 1;
            max_step_error = max_step_error.max(err[0].abs()).max(err[1].abs());
            yc = if y_max - (yc + h) < 1e-14 * y_max {
                y_max
            } else {
                yc + h
            };
            s = next;
            if s[0].abs() > BLOW_UP || s[1].abs() > BLOW_UP {
                return Err(Error::BlowUp { y: yc, value: s[0] });
            }
            push(yc, s, &mut y, &mut u, &mut du, &mut d2u);
        } else {
            rejected += 1;
        }
        let fac = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
        if h < 1e-14 * yc.max(1.0) {
            return Err(Error::BlowUp { y: yc, value: s[0] });
        }
    }
    let crossed = u.iter().any(|v| *v < 0.0);
    let tail = u.last().copied().unwrap_or(0.0).abs();
    let behavior = if crossed {
        TailBehavior::Oscillating
    } else if tail <= tail_bound(y_max) {
        TailBehavior::Decaying
    } else {
        TailBehavior::Diverging
    };
    Ok(RadialProfile {
        gamma,
        d,
        sigma,
        alpha0,
        y_max,
        linear: opts.linear,
        y,
        u,
        du,
        d2u,
        behavior,
        max_step_error,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Admissible `|U(Y)|` for a decaying profile: `1e-6 e^{5−Y}`.
pub fn tail_bound(y_max: f64) -> f64 {
    1e-6 * (5.0 - y_max).exp()
}

impl RadialProfile {
    fn interval(&self, yq: f64) -> usize {
        match self.y.binary_search_by(|v| v.partial_cmp(&yq).unwrap()) {
            Ok(i) => i.min(self.y.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.y.len() - 2),
        }
    }

    /// `(U, U′, U″)` by quintic Hermite interpolation of the table.
    pub fn eval(&self, yq: f64) -> Result<[f64; 3]> {
        if !(yq >= 0.0) || yq > self.y_max {
            return Err(Error::TableRange {
                y: yq,
                y_max: self.y_max,
            });
        }
        let i = self.interval(yq);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let h = y1 - y0;
        let c0 = self.u[i];
        let c1 = h * self.du[i];
        let c2 = 0.5 * h * h * self.d2u[i];
        let a = self.u[i + 1] - c0 - c1 - c2;
        let b = h * self.du[i + 1] - c1 - 2.0 * c2;
        let c = h * h * self.d2u[i + 1] - 2.0 * c2;
        let c3 = 10.0 * a - 4.0 * b + 0.5 * c;
        let c4 = -15.0 * a + 7.0 * b - c;
        let c5 = 6.0 * a - 3.0 * b + 0.5 * c;
        let t = (yq - y0) / h;
        let p = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
        let p1 = c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
        let p2 = 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5));
        Ok([p, p1 / h, p2 / (h * h)])
    }

    /// As [`eval`](Self::eval), continuing past `y_max` with the exponential
    /// tail `U(Y) e^{−(y−Y)}`.
    pub fn eval_extrapolated(&self, yq: f64) -> [f64; 3] {
        if yq <= self.y_max {
            return self.eval(yq.max(0.0)).expect("inside the table");
        }
        let uy = *self.u.last().unwrap();
        let v = uy * (self.y_max - yq).exp();
        [v, -v, v]
    }

    /// Largest ODE defect of the interpolant at interval midpoints with
    /// `y ≥ y_from`.
    pub fn midpoint_defect(&self, y_from: f64) -> f64 {
        let rhs = Rhs {
            d: self.d as f64,
            sigma: self.sigma,
            gamma: self.gamma,
            linear: self.linear,
        };
        self.y
            .windows(2)
            .filter(|w| w[0] >= y_from)
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                let [p, p1, p2] = self.eval(m).unwrap();
                (p2 - rhs.second(m, p, p1)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `max_{y ≥ y_from} (|U| + |U′| + |U″|) e^{y}`: the constant in the
    /// exponential tail bound.
    pub fn tail_constant(&self, y_from: f64) -> f64 {
        (0..self.y.len())
            .filter(|&i| self.y[i] >= y_from)
            .map(|i| (self.u[i].abs() + self.du[i].abs() + self.d2u[i].abs()) * self.y[i].exp())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub alpha0: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub profile: RadialProfile,
}

/// `true` when `α₀` is above the decaying solution.
fn overshoots(gamma: f64, d: usize, a: f64, y_max: f64) -> Result<bool> {
    match shoot_ode(gamma, d, a, y_max) {
        Ok(p) => Ok(p.behavior == TailBehavior::Oscillating),
        Err(Error::BlowUp { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Brackets `α₀` on `{2^{−6}, …, 2^4}` and bisects to the decaying profile.
pub fn find_alpha0(gamma: f64, d: usize, y_max: f64) -> Result<ShootingResult> {
    check_window(gamma, d)?;
    let ladder: Vec<f64> = (-6..=4).map(|k| 2f64.powi(k)).collect();
    let mut lo = None;
    let mut hi = None;
    for &a in &ladder {
        if overshoots(gamma, d, a, y_max)? {
            hi = Some(a);
            break;
        }
        lo = Some(a);
    }
    let (mut lo, mut hi) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        _ => {
            return Err(Error::InvalidInput(
                "no sign change of the shooting tail on the alpha0 ladder".into(),
            ))
        }
    };
    let bracket = (lo, hi);
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if overshoots(gamma, d, mid, y_max)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let profile = shoot_ode(gamma, d, lo, y_max)?;
    if profile.behavior != TailBehavior::Decaying {
        return Err(Error::InvalidInput(format!(
            "bisection limit alpha0 = {lo} does not decay: |U(Y)| = {}",
            profile.u.last().unwrap().abs()
        )));
    }
    Ok(ShootingResult {
        alpha0: lo,
        bracket,
        iterations,
        profile,
    })
}
