use super::{sphere_area, CutoffProfile, LadderScan};
use crate::error::{Error, Result};
use crate::fit::ladder_verdict;
use crate::grid::{ScalarField, TorusGrid};
use crate::quad::{integrate, integrate_panels, Budget};
use crate::special::{i0e, i1e};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Heat potential `u₃ = ∬ f₃(y,s) Γ(x−y, t−s)` of
/// `f₃(x,t) = A χ(x/√(T−t)) / (√(T−t) log(T−t))`.
///
/// `χ(y) = ψ(|y − c e₁|)` is the cutoff bump moved off the origin by `c`.
/// A centred bump has no dipole moment and its potential keeps a bounded
/// gradient; the offset makes every dyadic time scale push `Du₃` near the
/// origin in the same direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatForcedCE {
    pub d: usize,
    /// Horizon `T`; small enough that the forcing fits in the unit cell.
    pub t_final: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub cutoff: CutoffProfile,
    /// Periodic images per axis on each side.
    pub images: i32,
    pub rel_tol: f64,
    /// Integrand evaluations allowed per point value.
    pub budget: u64,
}

impl HeatForcedCE {
    pub fn new(d: usize, t_final: f64) -> Result<Self> {
        if d == 0 || d > 2 {
            return Err(Error::DimensionUnsupported(d));
        }
        let ce = HeatForcedCE {
            d,
            t_final,
            amplitude: 1.0,
            offset: 1.5,
            cutoff: CutoffProfile::default(),
            images: 3,
            rel_tol: 1e-6,
            budget: 50_000_000,
        };
        if !(t_final > 0.0 && ce.support_radius(0.0) < 0.5) {
            return Err(Error::InvalidInput(format!(
                "horizon {t_final}: the forcing must stay inside the unit cell, need T < {:.4}",
                (0.5 / (ce.offset + ce.cutoff.outer_radius)).powi(2)
            )));
        }
        Ok(ce)
    }

    /// Radius of a ball around the origin containing `supp f₃(·, t)`.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.offset + self.cutoff.outer_radius) * (self.t_final - t).sqrt()
    }

    /// Smallest `k` with `T − 2^{−k} > 0`.
    pub fn first_ladder_index(&self) -> i32 {
        (-self.t_final.log2()).floor() as i32 + 1
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t < self.t_final) {
            return Err(Error::InvalidInput(format!(
                "time {t} outside [0, {})",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Time factor `A / (√(T−s) log(T−s))`.
    fn g(&self, s: f64) -> f64 {
        let r = self.t_final - s;
        self.amplitude / (r.sqrt() * r.ln())
    }

    pub fn chi(&self, y: [f64; 2]) -> f64 {
        let z = [y[0] - self.offset, if self.d == 2 { y[1] } else { 0.0 }];
        self.cutoff.value(z[0].hypot(z[1]))
    }

    pub fn f3_eval(&self, x: [f64; 2], t: f64) -> Result<f64> {
        self.check_t(t)?;
        let l = (self.t_final - t).sqrt();
        Ok(self.g(t) * self.chi([x[0] / l, x[1] / l]))
    }

    pub fn f3_field(&self, grid: &TorusGrid, t: f64) -> Result<ScalarField> {
        self.check_grid(grid)?;
        let vals = (0..grid.len())
            .map(|i| self.f3_eval(grid.displacement(i, [0.0; 2]), t))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(*grid, vals)
    }

    fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if grid.d() != self.d {
            return Err(Error::GridMismatch(format!(
                "construction in dimension {} sampled on a {}-d grid",
                self.d,
                grid.d()
            )));
        }
        Ok(())
    }

    fn image_offsets(&self) -> Vec<[f64; 2]> {
        let m = self.images;
        let mut out = Vec::new();
        for i in -m..=m {
            if self.d == 1 {
                out.push([i as f64, 0.0]);
            } else {
                for j in -m..=m {
                    out.push([i as f64, j as f64]);
                }
            }
        }
        out
    }

    /// Breakpoints of `[a, b]` around a Gaussian of width `√τ` at `c`;
    /// `None` when the Gaussian is negligible on the interval.
    fn edges(a: f64, b: f64, c: f64, tau: f64) -> Option<Vec<f64>> {
        let w = tau.sqrt();
        if c < a - 14.0 * w || c > b + 14.0 * w {
            return None;
        }
        let mut e = vec![a, b];
        for p in [c - 8.0 * w, c - w, c, c + w, c + 8.0 * w] {
            if p > a && p < b {
                e.push(p);
            }
        }
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e.dedup();
        Some(e)
    }

    /// One time slice at displacement `z` from the bump centre: the value
    /// (`grad = false`) or the gradient of `χ_ℓ * Γ_τ`.
    fn slice(
        &self,
        z: [f64; 2],
        l: f64,
        tau: f64,
        grad: bool,
        budget: &mut Budget,
    ) -> Result<[f64; 2]> {
        let c = self.cutoff;
        let (inner, outer) = (c.inner_radius * l, c.outer_radius * l);
        let tol = 1e-3 * self.rel_tol;
        // Floor for slices whose Gaussian barely touches the bump.
        let atol = 1e-15 / l;
        if self.d == 1 {
            let gauss = |u: f64| (-u * u / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt();
            let x = z[0];
            if grad {
                // ∂_x ∫ χ_ℓ(y) Γ(x−y) dy = ∫ χ_ℓ′(y) Γ(x−y) dy on the two
                // transition intervals.
                let mut s = 0.0;
                for (lo, hi, sign) in [(inner, outer, 1.0), (-outer, -inner, -1.0)] {
                    if let Some(e) = Self::edges(lo, hi, x, tau) {
                        s += integrate_panels(
                            |y: f64| sign * c.d1(y.abs() / l) / l * gauss(x - y),
                            &e,
                            atol,
                            tol,
                            budget,
                        )?;
                    }
                }
                return Ok([s, 0.0]);
            }
            let v = match Self::edges(-outer, outer, x, tau) {
                Some(e) => integrate_panels(
                    |y: f64| c.value(y.abs() / l) * gauss(x - y),
                    &e,
                    atol,
                    tol,
                    budget,
                )?,
                None => 0.0,
            };
            return Ok([v, 0.0]);
        }
        let r = z[0].hypot(z[1]);
        let lo = if grad { inner } else { 0.0 };
        let Some(e) = Self::edges(lo, outer, r, tau) else {
            return Ok([0.0; 2]);
        };
        let k = 0.5 / tau;
        if grad {
            if r == 0.0 {
                return Ok([0.0; 2]);
            }
            let dw = integrate_panels(
                |rho: f64| {
                    let q = rho - r;
                    c.d1(rho / l) / l * rho * (-q * q * 0.5 * k).exp() * i1e(r * rho * k)
                },
                &e,
                atol,
                tol,
                budget,
            )? * k;
            return Ok([dw * z[0] / r, dw * z[1] / r]);
        }
        let w = integrate_panels(
            |rho: f64| {
                let q = rho - r;
                c.value(rho / l) * rho * (-q * q * 0.5 * k).exp() * i0e(r * rho * k)
            },
            &e,
            atol,
            tol,
            budget,
        )? * k;
        Ok([w, 0.0])
    }

    /// Time integral of the slices over `s ∈ (0, t)` in the variable
    /// `v = −log(T−s)`, summed over periodic images; component `comp`.
    fn potential(&self, x: [f64; 2], t: f64, grad: bool, comp: usize) -> Result<f64> {
        self.check_t(t)?;
        if self.amplitude == 0.0 || t == 0.0 {
            return Ok(0.0);
        }
        let mut budget = Budget::new(self.budget);
        let images = self.image_offsets();
        let v0 = -self.t_final.ln();
        let v1 = -(self.t_final - t).ln();
        let n_panels = ((v1 - v0).ceil() as usize).max(1) * 2;
        let edges: Vec<f64> = (0..=n_panels)
            .map(|k| v0 + (v1 - v0) * k as f64 / n_panels as f64)
            .collect();
        let mut err = None;
        let mut f = |v: f64| -> f64 {
            let rem = (-v).exp();
            let s = self.t_final - rem;
            let tau = t - s;
            if tau <= 0.0 || err.is_some() {
                return 0.0;
            }
            let l = rem.sqrt();
            let p = self.offset * l;
            let mut acc = 0.0;
            for m in &images {
                let z = [x[0] + m[0] - p, x[1] + m[1]];
                match self.slice(z, l, tau, grad, &mut budget) {
                    Ok(v) => acc += v[comp],
                    Err(e) => {
                        err = Some(e);
                        return 0.0;
                    }
                }
            }
            self.g(s) * rem * acc
        };
        let mut outer = Budget::new(u64::MAX);
        let mut total = 0.0;
        for w in edges.windows(2) {
            // The floor matters for components that vanish by symmetry.
            total += integrate(&mut f, w[0], w[1], 1e-14, self.rel_tol, &mut outer)?;
        }
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }

    pub fn u3_eval(&self, x: [f64; 2], t: f64) -> Result<f64> {
        self.potential(x, t, false, 0)
    }

    pub fn du3_eval(&self, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let a = self.potential(x, t, true, 0)?;
        let b = if self.d == 2 {
            self.potential(x, t, true, 1)?
        } else {
            0.0
        };
        Ok([a, b])
    }

    /// `max |Du₃(x,t)|` over the stencil `x = √(T−t)·(a, b)/4`,
    /// `a, b ∈ {−2, …, 2}`: a lower bound for the sup norm. With the default
    /// offset the stencil stays `√(T−t)/2` away from the current forcing,
    /// where `Du₃` is the accumulated field of the earlier scales rather
    /// than the local one (which decays like `1/|log(T−t)|`).
    pub fn du3_sup(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let l = 0.25 * (self.t_final - t).sqrt();
        let pts: Vec<[f64; 2]> = if self.d == 1 {
            (-2..=2).map(|a| [a as f64 * l, 0.0]).collect()
        } else {
            let mut v = Vec::new();
            for a in -2..=2 {
                for b in -2..=2 {
                    v.push([a as f64 * l, b as f64 * l]);
                }
            }
            v
        };
        let vals = pts
            .par_iter()
            .map(|x| self.du3_eval(*x, t).map(|g| g[0].hypot(g[1])))
            .collect::<Result<Vec<_>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }

    /// `du3_sup` on `t = T − 2^{−k}` for `k = k_min..=k_max`.
    pub fn du3_ladder(&self, k_min: i32, k_max: i32) -> Result<Vec<(f64, f64)>> {
        if k_min < self.first_ladder_index() || k_max < k_min {
            return Err(Error::InvalidInput(format!(
                "ladder {k_min}..={k_max} must start at k >= {}",
                self.first_ladder_index()
            )));
        }
        (k_min..=k_max)
            .map(|k| {
                let t = self.t_final - 2f64.powi(-k);
                self.du3_sup(t).map(|v| (t, v))
            })
            .collect()
    }

    pub fn u3_field(&self, grid: &TorusGrid, t: f64) -> Result<ScalarField> {
        self.check_grid(grid)?;
        let vals = (0..grid.len())
            .into_par_iter()
            .map(|i| self.u3_eval(grid.displacement(i, [0.0; 2]), t))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(*grid, vals)
    }

    /// `∫ |χ|^q` over `R^d`.
    fn chi_moment(&self, q: f64) -> Result<f64> {
        let mut b = Budget::new(1_000_000);
        let c = self.cutoff;
        let d = self.d as i32;
        let s = integrate_panels(
            |r: f64| c.value(r).powf(q) * r.powi(d - 1),
            &[0.0, c.inner_radius, c.outer_radius],
            0.0,
            1e-13,
            &mut b,
        )?;
        Ok(sphere_area(self.d) * s * self.amplitude.abs().powf(q))
    }

    /// Partial integrals `∬_{t < T−ε_k} |f₃|^q` for `ε_k = T 2^{−k}`,
    /// `k = 0..=k_max`, from the exact reduction
    /// `∬ |f₃|^q = ∫χ^q · ∫ (T−t)^{(d−q)/2} |log(T−t)|^{−q} dt`.
    /// The verdict fits the second half of the ladder.
    pub fn f3_lq_scan(&self, q: f64, k_max: usize) -> Result<LadderScan> {
        if !(q >= 1.0) {
            return Err(Error::BadExponent {
                value: q,
                reason: "scan exponent must be at least 1",
            });
        }
        if k_max < 6 {
            return Err(Error::InsufficientSamples {
                needed: 6,
                got: k_max,
            });
        }
        let kq = self.chi_moment(q)?;
        let a = 0.5 * (self.d as f64 - q);
        let mut budget = Budget::new(10_000_000);
        let mut scales = vec![self.t_final];
        let mut partial = vec![0.0];
        let mut acc = 0.0;
        for k in 1..=k_max {
            let hi = self.t_final * 0.5f64.powi(k as i32 - 1);
            let lo = self.t_final * 0.5f64.powi(k as i32);
            // s = e^{−v}: ∫ s^a |log s|^{−q} ds = ∫ e^{−(a+1)v} v^{−q} dv.
            acc += kq
                * integrate(
                    |v: f64| (-(a + 1.0) * v).exp() * v.powf(-q),
                    -hi.ln(),
                    -lo.ln(),
                    0.0,
                    1e-12,
                    &mut budget,
                )?;
            scales.push(lo);
            partial.push(acc);
        }
        let start = k_max / 2;
        let (verdict, slope) = ladder_verdict(&scales[start..], &partial[start..])?;
        Ok(LadderScan {
            exponent: q,
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
    use crate::fit::LadderVerdict;

    #[test]
    fn zero_profile() {
        let ce = HeatForcedCE::new(2, 0.03).unwrap().with_amplitude(0.0);
        assert_eq!(ce.u3_eval([0.1, 0.0], 0.02).unwrap(), 0.0);
        assert_eq!(ce.du3_sup(0.02).unwrap(), 0.0);
    }

    #[test]
    fn support_shrinks() {
        let ce = HeatForcedCE::new(2, 0.03).unwrap();
        let t = 0.03 - 1e-3;
        let l = (0.03f64 - t).sqrt();
        assert_eq!(ce.f3_eval([0.9 * l, 0.0], t).unwrap(), 0.0);
        assert_eq!(ce.f3_eval([2.1 * l, 0.0], t).unwrap(), 0.0);
        assert!(ce.f3_eval([1.5 * l, 0.0], t).unwrap() < 0.0);
        assert!(ce.support_radius(t) < 2.01 * l);
    }

    #[test]
    fn lq_verdicts() {
        for d in [1usize, 2] {
            let ce = HeatForcedCE::new(d, 0.03).unwrap();
            let lo = ce.f3_lq_scan(d as f64 + 1.0, 64).unwrap();
            let mid = ce.f3_lq_scan(d as f64 + 2.0, 64).unwrap();
            let hi = ce.f3_lq_scan(d as f64 + 3.0, 64).unwrap();
            assert_eq!(lo.verdict, LadderVerdict::Convergent);
            assert_eq!(mid.verdict, LadderVerdict::Convergent);
            assert_eq!(hi.verdict, LadderVerdict::Divergent);
            assert!(lo.slope <= mid.slope && mid.slope <= hi.slope);
        }
    }

    #[test]
    fn heat_kernel_slice_1d() {
        // Value of the 1-d slice against a direct midpoint sum.
        let ce = HeatForcedCE::new(1, 0.03).unwrap();
        let (l, tau, x) = (0.4, 0.003, 0.05);
        let mut b = Budget::new(1_000_000);
        let v = ce.slice([x, 0.0], l, tau, false, &mut b).unwrap()[0];
        let n = 200_000;
        let h = 0.4 / n as f64;
        let direct: f64 = (0..n)
            .map(|i| {
                let y = -0.2 + (i as f64 + 0.5) * h;
                ce.cutoff.value(y.abs() / l) * (-(x - y).powi(2) / (4.0 * tau)).exp()
                    / (4.0 * PI * tau).sqrt()
                    * h
            })
            .sum();
        assert!((v - direct).abs() < 1e-8, "{v} {direct}");
    }

    #[test]
    fn radial_slice_matches_cartesian() {
        // 2-d Bessel reduction against a tensor-product midpoint sum.
        let ce = HeatForcedCE::new(2, 0.03).unwrap();
        let (l, tau) = (0.4, 0.002);
        let z = [0.12, 0.05];
        let mut b = Budget::new(1_000_000);
        let v = ce.slice(z, l, tau, false, &mut b).unwrap()[0];
        let gr = ce.slice(z, l, tau, true, &mut b).unwrap();
        let n = 800;
        let h = 0.4 / n as f64;
        let (mut s, mut gx) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let y = [-0.2 + (i as f64 + 0.5) * h, -0.2 + (j as f64 + 0.5) * h];
                let chi = ce.cutoff.value(y[0].hypot(y[1]) / l);
                let dx = z[0] - y[0];
                let dy = z[1] - y[1];
                let k = (-(dx * dx + dy * dy) / (4.0 * tau)).exp() / (4.0 * PI * tau);
                s += chi * k * h * h;
                gx += chi * k * (-dx / (2.0 * tau)) * h * h;
            }
        }
        assert!((v - s).abs() < 1e-6, "{v} {s}");
        assert!(
            (gr[0] - gx).abs() < 1e-4 * gx.abs().max(1.0),
            "{} {gx}",
            gr[0]
        );
    }

    #[test]
    fn du3_ladder_increases() {
        for d in [1usize, 2] {
            let ce = HeatForcedCE::new(d, 0.03).unwrap();
            let k0 = ce.first_ladder_index();
            assert_eq!(k0, 6);
            let lad = ce.du3_ladder(k0, 10).unwrap();
            for w in lad.windows(2) {
                assert!(w[1].1 > w[0].1, "d={d} {lad:?}");
            }
        }
    }

    #[test]
    fn horizon_limits() {
        assert!(HeatForcedCE::new(2, 0.07).is_err());
        assert!(HeatForcedCE::new(3, 0.03).is_err());
        let ce = HeatForcedCE::new(1, 0.03).unwrap();
        assert!(ce.du3_ladder(5, 8).is_err());
        assert!(ce.support_radius(0.0) < 0.5);
    }
}
