use super::{sphere_area, CutoffProfile, LadderScan};
use crate::error::{Error, Result};
use crate::fit::ladder_verdict;
use crate::grid::{gradient_central, ScalarField, TorusGrid};
use crate::quad::{integrate, Budget};
use serde::{Deserialize, Serialize};

/// `u₁ = c ψ(|x|) |x|^α`, a time-independent solution of
/// `∂_t u − Δu + |Du|^γ = f₁` with `f₁ ≡ 0` near the origin, for `γ > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryCE {
    pub gamma: f64,
    pub d: usize,
    pub alpha: f64,
    pub c: f64,
    pub cutoff: CutoffProfile,
}

impl StationaryCE {
    pub fn new(gamma: f64, d: usize) -> Result<Self> {
        if !(gamma > 2.0) || !gamma.is_finite() {
            return Err(Error::BadGamma(gamma));
        }
        if d < 2 {
            return Err(Error::DimensionUnsupported(d));
        }
        let alpha = (gamma - 2.0) / (gamma - 1.0);
        let c = (d as f64 + alpha - 2.0).powf(1.0 / (gamma - 1.0)) / alpha;
        Ok(StationaryCE {
            gamma,
            d,
            alpha,
            c,
            cutoff: CutoffProfile::default(),
        })
    }

    /// `α(γ−1) − (γ−2)` and `(cα)^{γ−1} − (d+α−2)`.
    pub fn identity_defects(&self) -> (f64, f64) {
        (
            self.alpha * (self.gamma - 1.0) - (self.gamma - 2.0),
            (self.c * self.alpha).powf(self.gamma - 1.0) - (self.d as f64 + self.alpha - 2.0),
        )
    }

    /// Radial profile and its first two derivatives at `r > 0`.
    fn radial(&self, r: f64) -> [f64; 3] {
        let (a, c) = (self.alpha, self.c);
        let (p, p1, p2) = (self.cutoff.value(r), self.cutoff.d1(r), self.cutoff.d2(r));
        let ra = r.powf(a);
        [
            c * p * ra,
            c * (p1 * ra + a * p * ra / r),
            c * (p2 * ra + 2.0 * a * p1 * ra / r + a * (a - 1.0) * p * ra / (r * r)),
        ]
    }

    pub fn u1_eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            self.radial(r)[0]
        }
    }

    /// `|Du₁|` at radius `r > 0`.
    pub fn du1_norm(&self, r: f64) -> f64 {
        self.radial(r)[1].abs()
    }

    /// `−Δu₁ + |Du₁|^γ` at radius `r > 0`.
    pub fn f1_eval(&self, r: f64) -> f64 {
        let [_, g1, g2] = self.radial(r);
        -(g2 + (self.d as f64 - 1.0) * g1 / r) + g1.abs().powf(self.gamma)
    }

    /// `|D_pH(Du₁)| = γ |Du₁|^{γ−1}`.
    pub fn dph_norm(&self, r: f64) -> f64 {
        self.gamma * self.du1_norm(r).powf(self.gamma - 1.0)
    }

    /// `sup |f₁|` over `samples` radii of the transition annulus.
    pub fn f1_sup(&self, samples: usize) -> f64 {
        let (a, b) = (self.cutoff.inner_radius, self.cutoff.outer_radius);
        (0..=samples)
            .map(|k| self.f1_eval(a + (b - a) * k as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
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

    fn sample(&self, grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        self.check_grid(grid)?;
        let vals = (0..grid.len())
            .map(|i| {
                let x = grid.displacement(i, [0.0; 2]);
                f(x[0].hypot(x[1]))
            })
            .collect();
        ScalarField::new(*grid, vals)
    }

    /// `u₁` centred at the origin cell.
    pub fn u1_field(&self, grid: &TorusGrid) -> Result<ScalarField> {
        self.sample(grid, |r| self.u1_eval(r))
    }

    /// `f₁` on the grid; the origin cell gets the limit value 0.
    pub fn f1_field(&self, grid: &TorusGrid) -> Result<ScalarField> {
        self.sample(grid, |r| if r == 0.0 { 0.0 } else { self.f1_eval(r) })
    }

    /// `−Δ_h u₁ + |D_h u₁|^γ − f₁` with centred differences.
    pub fn discrete_residual(&self, grid: &TorusGrid) -> Result<ScalarField> {
        let u = self.u1_field(grid)?;
        let f = self.f1_field(grid)?;
        let lap =
            crate::grid::ops::apply_nondiv(&crate::grid::CoefField::identity(*grid), u.values());
        let du = gradient_central(&u);
        let vals = (0..grid.len())
            .map(|i| {
                let p = du.get(i);
                -lap[i] + p[0].hypot(p[1]).powf(self.gamma) - f.get(i)
            })
            .collect();
        ScalarField::new(*grid, vals)
    }

    /// Partial integrals `∫_{ε_k < |x| < 1/8} |D_pH(Du₁)|^p` on the ladder
    /// `ε_k = 2^{−k}/8`, `k = 0..=k_max`.
    pub fn dph_lp_scan(&self, p: f64, k_max: usize) -> Result<LadderScan> {
        if !(p >= 1.0) {
            return Err(Error::BadExponent {
                value: p,
                reason: "scan exponent must be at least 1",
            });
        }
        if k_max < 3 {
            return Err(Error::InsufficientSamples {
                needed: 3,
                got: k_max,
            });
        }
        let area = sphere_area(self.d);
        let d = self.d as f64;
        let mut budget = Budget::new(10_000_000);
        let mut scales = Vec::with_capacity(k_max + 1);
        let mut partial = Vec::with_capacity(k_max + 1);
        let mut acc = 0.0;
        let r0: f64 = 0.125;
        scales.push(r0);
        partial.push(0.0);
        for k in 1..=k_max {
            let (hi, lo) = (r0 * 0.5f64.powi(k as i32 - 1), r0 * 0.5f64.powi(k as i32));
            // r = e^v, dr = r dv.
            let shell = integrate(
                |v: f64| {
                    let r = v.exp();
                    area * r.powf(d) * self.dph_norm(r).powf(p)
                },
                lo.ln(),
                hi.ln(),
                0.0,
                1e-12,
                &mut budget,
            )?;
            acc += shell;
            scales.push(lo);
            partial.push(acc);
        }
        let (verdict, slope) = ladder_verdict(&scales, &partial)?;
        Ok(LadderScan {
            exponent: p,
            scales,
            partial,
            verdict,
            slope,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{loglog_slope, LadderVerdict};
    use crate::hj::lipschitz_seminorm;

    #[test]
    fn constants() {
        let ce = StationaryCE::new(3.0, 3).unwrap();
        assert!((ce.alpha - 0.5).abs() < 1e-15);
        assert!((ce.c - 2.0 * 1.5f64.sqrt()).abs() < 1e-12);
        let (a, b) = ce.identity_defects();
        assert!(a.abs() < 1e-15 && b.abs() < 1e-13);
        assert!(matches!(StationaryCE::new(2.0, 2), Err(Error::BadGamma(_))));
    }

    #[test]
    fn f1_vanishes_inside_and_outside() {
        for (g, d) in [(3.0, 2), (2.5, 3), (4.0, 2)] {
            let ce = StationaryCE::new(g, d).unwrap();
            for k in 1..40 {
                let r = 0.25 * k as f64 / 40.0;
                let scale = r.powf(ce.alpha - 2.0);
                assert!(ce.f1_eval(r).abs() <= 1e-12 * scale, "r={r}");
            }
            assert_eq!(ce.f1_eval(0.6), 0.0);
            assert!(ce.f1_sup(200).is_finite());
        }
    }

    #[test]
    fn scan_thresholds() {
        let ce = StationaryCE::new(3.0, 2).unwrap();
        let below = ce.dph_lp_scan(1.5, 20).unwrap();
        let above = ce.dph_lp_scan(2.5, 20).unwrap();
        assert_eq!(below.verdict, LadderVerdict::Convergent);
        assert_eq!(above.verdict, LadderVerdict::Divergent);
        assert!((below.slope + 0.5).abs() < 0.05 && (above.slope - 0.5).abs() < 0.05);
    }

    #[test]
    fn lipschitz_growth() {
        let ce = StationaryCE::new(3.0, 2).unwrap();
        let ns = [64usize, 128, 256];
        let h: Vec<f64> = ns.iter().map(|n| 1.0 / *n as f64).collect();
        let lip: Vec<f64> = ns
            .iter()
            .map(|&n| lipschitz_seminorm(&ce.u1_field(&TorusGrid::new(2, n).unwrap()).unwrap()))
            .collect();
        let fit = loglog_slope(&h, &lip).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.1, "{}", fit.slope);
    }

    #[test]
    fn discrete_residual_refines() {
        let ce = StationaryCE::new(3.0, 2).unwrap();
        let mut errs = Vec::new();
        let ns = [64usize, 128, 256];
        for &n in &ns {
            let g = TorusGrid::new(2, n).unwrap();
            let r = ce.discrete_residual(&g).unwrap();
            let e = (0..g.len())
                .filter(|&i| {
                    let x = g.displacement(i, [0.0; 2]);
                    let rr = x[0].hypot(x[1]);
                    rr > 1.0 / 16.0 && rr < 0.125
                })
                .map(|i| r.get(i).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let h: Vec<f64> = ns.iter().map(|n| 1.0 / *n as f64).collect();
        let slope = loglog_slope(&h, &errs).unwrap().slope;
        assert!(slope >= 0.8, "{slope} {errs:?}");
    }
}
