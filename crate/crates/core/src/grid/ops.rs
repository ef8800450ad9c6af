use super::{eigen_range, CoefField, ScalarField, TorusGrid, VectorField};
use crate::error::{Error, Result};

/// Centred second-order difference `(f(x+h) - f(x-h)) / 2h` per axis.
pub fn gradient_central(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let inv = 0.5 / g.h();
    let v = f.values();
    let out = (0..g.len())
        .map(|i| {
            let mut dv = [0.0; 2];
            for (k, slot) in dv.iter_mut().enumerate().take(g.d()) {
                *slot = (v[g.shift(i, k, 1)] - v[g.shift(i, k, -1)]) * inv;
            }
            dv
        })
        .collect();
    VectorField::from_vec_unchecked(g, out)
}

/// Forward and backward first-order quotients per axis.
pub fn one_sided_quotients(f: &ScalarField) -> (VectorField, VectorField) {
    let g = *f.grid();
    let inv = 1.0 / g.h();
    let v = f.values();
    let mut fwd = vec![[0.0; 2]; g.len()];
    let mut bwd = vec![[0.0; 2]; g.len()];
    for i in 0..g.len() {
        for k in 0..g.d() {
            fwd[i][k] = (v[g.shift(i, k, 1)] - v[i]) * inv;
            bwd[i][k] = (v[i] - v[g.shift(i, k, -1)]) * inv;
        }
    }
    (
        VectorField::from_vec_unchecked(g, fwd),
        VectorField::from_vec_unchecked(g, bwd),
    )
}

/// Pure second differences `D_kk f` per axis.
pub fn second_differences(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let inv = 1.0 / (g.h() * g.h());
    let v = f.values();
    let out = (0..g.len())
        .map(|i| {
            let mut dv = [0.0; 2];
            for (k, slot) in dv.iter_mut().enumerate().take(g.d()) {
                *slot = (v[g.shift(i, k, 1)] - 2.0 * v[i] + v[g.shift(i, k, -1)]) * inv;
            }
            dv
        })
        .collect();
    VectorField::from_vec_unchecked(g, out)
}

/// Minimum over cells of the smallest eigenvalue of `a`.
pub fn ellipticity_certificate(a: &CoefField) -> Result<f64> {
    let d = a.grid().d();
    let mut lam = f64::INFINITY;
    let mut worst = 0;
    for (i, &m) in a.values().iter().enumerate() {
        let e = eigen_range(m, d).0;
        if e < lam {
            lam = e;
            worst = i;
        }
    }
    if lam <= 0.0 {
        return Err(Error::NotElliptic {
            min_eigenvalue: lam,
            cell: worst,
        });
    }
    Ok(lam)
}

/// Discrete `Σ a_ij ∂_ij f`: centred second differences on the diagonal and
/// the four-point cross difference for the mixed term.
pub fn elliptic_apply(a: &CoefField, f: &ScalarField) -> Result<ScalarField> {
    a.grid().check_same(f.grid())?;
    ellipticity_certificate(a)?;
    Ok(ScalarField::from_vec_unchecked(
        *f.grid(),
        apply_nondiv(a, f.values()),
    ))
}

/// Discrete `Σ ∂_ij (a_ij ρ)`, the exact transpose of [`elliptic_apply`]
/// with respect to the cell pairing.
pub fn elliptic_apply_transpose(a: &CoefField, rho: &ScalarField) -> Result<ScalarField> {
    a.grid().check_same(rho.grid())?;
    ellipticity_certificate(a)?;
    Ok(ScalarField::from_vec_unchecked(
        *rho.grid(),
        apply_transpose(a, rho.values()),
    ))
}

pub(crate) fn apply_nondiv(a: &CoefField, f: &[f64]) -> Vec<f64> {
    let g = *a.grid();
    let mut out = vec![0.0; g.len()];
    apply_nondiv_into(&g, a.values(), f, &mut out);
    out
}

pub(crate) fn apply_nondiv_into(g: &TorusGrid, a: &[[f64; 3]], f: &[f64], out: &mut [f64]) {
    let inv = 1.0 / (g.h() * g.h());
    for i in 0..g.len() {
        let m = a[i];
        let dxx = f[g.shift(i, 0, 1)] - 2.0 * f[i] + f[g.shift(i, 0, -1)];
        let mut acc = m[0] * dxx;
        if g.d() == 2 {
            let dyy = f[g.shift(i, 1, 1)] - 2.0 * f[i] + f[g.shift(i, 1, -1)];
            acc += m[2] * dyy;
            if m[1] != 0.0 {
                acc += 0.5 * m[1] * cross(g, f, i);
            }
        }
        out[i] = acc * inv;
    }
}

pub(crate) fn apply_transpose(a: &CoefField, rho: &[f64]) -> Vec<f64> {
    let g = *a.grid();
    let mut out = vec![0.0; g.len()];
    apply_transpose_into(&g, a.values(), rho, &mut out);
    out
}

pub(crate) fn apply_transpose_into(g: &TorusGrid, a: &[[f64; 3]], rho: &[f64], out: &mut [f64]) {
    let inv = 1.0 / (g.h() * g.h());
    let w = |i: usize, k: usize| a[i][k] * rho[i];
    let mixed: Option<Vec<f64>> = (g.d() == 2 && a.iter().any(|m| m[1] != 0.0))
        .then(|| (0..g.len()).map(|i| w(i, 1)).collect());
    for i in 0..g.len() {
        let (p, m) = (g.shift(i, 0, 1), g.shift(i, 0, -1));
        let mut acc = w(p, 0) - 2.0 * w(i, 0) + w(m, 0);
        if g.d() == 2 {
            let (p, m) = (g.shift(i, 1, 1), g.shift(i, 1, -1));
            acc += w(p, 2) - 2.0 * w(i, 2) + w(m, 2);
            // The cross stencil is invariant under point reflection, so its
            // transpose is the same stencil acting on a12 * rho.
            if let Some(c) = &mixed {
                acc += 0.5 * cross(g, c, i);
            }
        }
        out[i] = acc * inv;
    }
}

fn cross(g: &TorusGrid, f: &[f64], i: usize) -> f64 {
    let xp = g.shift(i, 0, 1);
    let xm = g.shift(i, 0, -1);
    f[g.shift(xp, 1, 1)] - f[g.shift(xp, 1, -1)] - f[g.shift(xm, 1, 1)] + f[g.shift(xm, 1, -1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_exactly_zero() {
        let f = ScalarField::constant(TorusGrid::new(2, 16).unwrap(), 3.7).unwrap();
        assert!(gradient_central(&f).is_zero());
    }

    #[test]
    fn gradient_of_sine_at_origin() {
        let f = ScalarField::from_fn(g1(256), |x| (2.0 * PI * x[0]).sin()).unwrap();
        let d = gradient_central(&f);
        assert!((d.get(0)[0] - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn gradient_of_hat_off_kink() {
        let n = 64;
        let f = ScalarField::from_fn(g1(n), |x| x[0] * (1.0 - x[0])).unwrap();
        let d = gradient_central(&f);
        let (fwd, bwd) = one_sided_quotients(&f);
        let h = 1.0 / n as f64;
        let mut max = 0.0f64;
        for i in 1..n - 1 {
            let x = i as f64 * h;
            let exact = 1.0 - 2.0 * x;
            assert!((d.get(i)[0] - exact).abs() < 1e-12);
            let avg = 0.5 * (fwd.get(i)[0] + bwd.get(i)[0]);
            assert!((avg - d.get(i)[0]).abs() < 1e-12);
            max = max.max(d.get(i)[0].abs());
        }
        assert!((max - 1.0).abs() <= 2.0 * h + 1e-12);
    }

    #[test]
    fn quotients_bracket_centred() {
        let f = ScalarField::from_fn(g1(64), |x| (2.0 * PI * x[0]).sin()).unwrap();
        let d = gradient_central(&f);
        let (fwd, bwd) = one_sided_quotients(&f);
        for i in 0..64 {
            let (a, b) = (fwd.get(i)[0], bwd.get(i)[0]);
            let c = d.get(i)[0];
            assert!(a.min(b) - 1e-12 <= c && c <= a.max(b) + 1e-12);
        }
    }

    #[test]
    fn spike_forward_quotient() {
        let mut v = vec![0.0; 64];
        v[10] = 1.0;
        let f = ScalarField::new(g1(64), v).unwrap();
        let (fwd, _) = one_sided_quotients(&f);
        let m = fwd.values().iter().map(|x| x[0]).fold(f64::MIN, f64::max);
        assert_eq!(m, 64.0);
    }

    #[test]
    fn laplacian_eigenfunctions() {
        let g = g1(128);
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        for s in [1.0, 2.0] {
            let out = elliptic_apply(&CoefField::scaled_identity(g, s), &f).unwrap();
            for i in 0..128 {
                let exact = -4.0 * PI * PI * s * f.get(i);
                assert!((out.get(i) - exact).abs() < 1e-2 * s);
            }
        }
    }

    fn product_error(n: usize) -> f64 {
        let g = TorusGrid::new(2, n).unwrap();
        let f =
            ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()).unwrap();
        let out = elliptic_apply(&CoefField::identity(g), &f).unwrap();
        out.values()
            .iter()
            .zip(f.values())
            .map(|(o, v)| (o + 8.0 * PI * PI * v).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn product_eigenfunction_second_order() {
        let (e1, e2) = (product_error(32), product_error(64));
        let slope = (e1 / e2).log2();
        assert!(slope > 1.9, "slope {slope}");
    }

    #[test]
    fn mixed_term_second_order() {
        let err = |n: usize| {
            let g = TorusGrid::new(2, n).unwrap();
            let a = CoefField::constant(g, 1.0, 0.3, 0.8).unwrap();
            let f = ScalarField::from_fn(g, |x| (2.0 * PI * (x[0] + x[1])).sin()).unwrap();
            let out = elliptic_apply(&a, &f).unwrap();
            let k = 4.0 * PI * PI;
            out.values()
                .iter()
                .zip(f.values())
                .map(|(o, v)| (o + k * (1.0 + 0.6 + 0.8) * v).abs())
                .fold(0.0, f64::max)
        };
        assert!((err(32) / err(64)).log2() > 1.9);
    }

    #[test]
    fn transpose_matches_pairing() {
        let g = TorusGrid::new(2, 12).unwrap();
        let a = CoefField::from_fn(g, |x| {
            [
                1.0 + 0.3 * (2.0 * PI * x[0]).sin(),
                0.2 * (2.0 * PI * x[1]).cos(),
                1.2,
            ]
        })
        .unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * 7.0).sin() + x[1] * x[1]).unwrap();
        let r = ScalarField::from_fn(g, |x| (x[1] * 3.0).cos() + x[0]).unwrap();
        let au = elliptic_apply(&a, &u).unwrap();
        let atr = elliptic_apply_transpose(&a, &r).unwrap();
        let lhs = au.dot(&r).unwrap();
        let rhs = u.dot(&atr).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn certificates() {
        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(
            ellipticity_certificate(&CoefField::identity(g)).unwrap(),
            1.0
        );
        let a = CoefField::constant(g, 2.0, 0.0, 0.5).unwrap();
        assert_eq!(ellipticity_certificate(&a).unwrap(), 0.5);
        let a = CoefField::from_fn(g, |x| {
            let s = 1.0 + 0.5 * (2.0 * PI * x[0]).sin();
            [s, 0.0, s]
        })
        .unwrap();
        assert!((ellipticity_certificate(&a).unwrap() - 0.5).abs() < 1e-12);
        let bad = CoefField::constant(g, 1.0, 2.0, 1.0).unwrap();
        assert!(matches!(
            ellipticity_certificate(&bad),
            Err(Error::NotElliptic { .. })
        ));
        let f = ScalarField::constant(g, 1.0).unwrap();
        assert!(elliptic_apply(&bad, &f).is_err());
    }
}
