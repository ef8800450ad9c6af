use super::shooting::{check_window, find_alpha0, in_l2_window, RadialProfile};
use super::{sphere_area, CutoffProfile};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::quad::{integrate_panels, Budget};

/// Default end of the shooting table.
pub const Y_MAX: f64 = 10.0;

/// `u₂(x,t) = −t^{−σ} U(|x| t^{−1/2}) ψ(|x|)` for `1 < γ < 2`. Only for
/// `γ > 1 + 2/(d+2)` does `u₂(·,t) → 0` in `L²`; see `l2_window`.
#[derive(Debug, Clone)]
pub struct SelfSimilarCE {
    pub gamma: f64,
    pub d: usize,
    pub sigma: f64,
    pub alpha0: f64,
    pub profile: RadialProfile,
    pub cutoff: CutoffProfile,
    pub l2_window: bool,
}

impl SelfSimilarCE {
    /// Shoots for the decaying profile on `[0, Y_MAX]`.
    pub fn new(gamma: f64, d: usize) -> Result<Self> {
        let shot = find_alpha0(gamma, d, Y_MAX)?;
        Ok(Self::from_profile(shot.profile))
    }

    pub fn from_profile(profile: RadialProfile) -> Self {
        SelfSimilarCE {
            gamma: profile.gamma,
            d: profile.d,
            sigma: profile.sigma,
            alpha0: profile.alpha0,
            l2_window: in_l2_window(profile.gamma, profile.d),
            profile,
            cutoff: CutoffProfile::default(),
        }
    }

    fn check_t(t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("time {t} must be positive")));
        }
        Ok(())
    }

    /// Cutoff-free profile `−t^{−σ} U(ξ)`, `ξ = |x| t^{−1/2}`.
    pub fn core_eval(&self, r: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let xi = r / t.sqrt();
        Ok(-t.powf(-self.sigma) * self.profile.eval(xi)?[0])
    }

    /// Strict evaluation: `TableRange` when the similarity variable leaves
    /// the table inside the support of `ψ`.
    pub fn u2_eval(&self, r: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let psi = self.cutoff.value(r);
        if psi == 0.0 {
            return Ok(0.0);
        }
        let xi = r / t.sqrt();
        Ok(-t.powf(-self.sigma) * self.profile.eval(xi)?[0] * psi)
    }

    /// `u₂` with the exponential-tail continuation of `U` past the table.
    pub fn u2_extrapolated(&self, r: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let psi = self.cutoff.value(r);
        if psi == 0.0 {
            return Ok(0.0);
        }
        Ok(-t.powf(-self.sigma) * self.profile.eval_extrapolated(r / t.sqrt())[0] * psi)
    }

    /// `f₂ = ∂_t u₂ − Δu₂ + |Du₂|^γ` written through the profile:
    /// `t^{−σ−1}{[U″ + ((d−1)/ξ + ξ/2)U′ + σU]ψ + |U′ψ + √t Uψ′|^γ
    ///  + 2√t U′ψ′ + tUψ″ + (d−1) t Uψ′/|x|}`.
    pub fn f2_eval(&self, r: f64, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let (psi, p1, p2) = (self.cutoff.value(r), self.cutoff.d1(r), self.cutoff.d2(r));
        if psi == 0.0 && p1 == 0.0 && p2 == 0.0 {
            return Ok(0.0);
        }
        let st = t.sqrt();
        let xi = r / st;
        let [u, u1, u2] = self.profile.eval_extrapolated(xi);
        let d1 = self.d as f64 - 1.0;
        let ode = if xi == 0.0 {
            // U′/ξ → U″(0).
            u2 + d1 * u2 + self.sigma * u
        } else {
            u2 + (d1 / xi + 0.5 * xi) * u1 + self.sigma * u
        };
        let radial_term = if r == 0.0 { 0.0 } else { d1 * t * u * p1 / r };
        let bracket = ode * psi
            + (u1 * psi + st * u * p1).abs().powf(self.gamma)
            + 2.0 * st * u1 * p1
            + t * u * p2
            + radial_term;
        Ok(t.powf(-self.sigma - 1.0) * bracket)
    }

    fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if grid.d() != self.d {
            return Err(Error::GridMismatch(format!(
                "profile in dimension {} sampled on a {}-d grid",
                self.d,
                grid.d()
            )));
        }
        Ok(())
    }

    fn sample(&self, grid: &TorusGrid, f: impl Fn(f64) -> Result<f64>) -> Result<ScalarField> {
        self.check_grid(grid)?;
        let vals = (0..grid.len())
            .map(|i| {
                let x = grid.displacement(i, [0.0; 2]);
                f(x[0].hypot(x[1]))
            })
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(*grid, vals)
    }

    pub fn u2_field(&self, grid: &TorusGrid, t: f64) -> Result<ScalarField> {
        self.sample(grid, |r| self.u2_extrapolated(r, t))
    }

    pub fn f2_field(&self, grid: &TorusGrid, t: f64) -> Result<ScalarField> {
        self.sample(grid, |r| self.f2_eval(r, t))
    }

    /// `‖u₂(·,t)‖_{L²}` by radial quadrature.
    pub fn l2_norm(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        let mut budget = Budget::new(10_000_000);
        let area = sphere_area(self.d);
        let st = t.sqrt();
        let mut edges: Vec<f64> = (0..=40).map(|k| (k as f64 * 0.25 * st).min(0.5)).collect();
        edges.extend([0.25, 0.5]);
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        let s = integrate_panels(
            |r| {
                let v = self.u2_extrapolated(r, t).unwrap_or(0.0);
                area * r.powi(self.d as i32 - 1) * v * v
            },
            &edges,
            0.0,
            1e-10,
            &mut budget,
        )?;
        Ok(s.sqrt())
    }

    /// Validates the exponent window without shooting.
    pub fn check(gamma: f64, d: usize) -> Result<()> {
        check_window(gamma, d)
    }
}
