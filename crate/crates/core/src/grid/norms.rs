use super::{ScalarField, Trajectory};
use crate::error::{Error, Result};

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::BadExponent {
            value: p,
            reason: "norm exponent must be at least 1",
        });
    }
    Ok(())
}

fn sum_pow(values: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Midpoint-rule `L^p` norm on the unit torus; `p = ∞` is the max of `|f|`.
pub fn lp_space_norm(f: &ScalarField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p == f64::INFINITY {
        return Ok(sup(f.values()));
    }
    Ok((sum_pow(f.values(), p) * f.grid().cell_volume()).powf(1.0 / p))
}

/// `(∫ |f|^p w)^{1/p}` for a nonnegative weight field `w`.
pub fn weighted_lp_norm(f: &ScalarField, w: &ScalarField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    f.grid().check_same(w.grid())?;
    if p == f64::INFINITY {
        return Ok(f
            .values()
            .iter()
            .zip(w.values())
            .filter(|(_, w)| **w > 0.0)
            .fold(0.0, |m, (v, _)| m.max(v.abs())));
    }
    let s: f64 = f
        .values()
        .iter()
        .zip(w.values())
        .map(|(v, w)| v.abs().powf(p) * w)
        .sum();
    Ok((s * f.grid().cell_volume()).powf(1.0 / p))
}

/// Space-time `L^q` norm with trapezoid weights in time; `q = ∞` is the max
/// over levels of the sup norm.
pub fn lq_spacetime_norm(traj: &Trajectory, q: f64) -> Result<f64> {
    check_exponent(q)?;
    if q == f64::INFINITY {
        return Ok(traj
            .frames()
            .iter()
            .map(|f| sup(f.values()))
            .fold(0.0, f64::max));
    }
    let tg = traj.time_grid();
    let vol = traj.grid().cell_volume();
    let total: f64 = traj
        .frames()
        .iter()
        .enumerate()
        .map(|(k, f)| tg.trapezoid_weight(k) * sum_pow(f.values(), q) * vol)
        .sum();
    Ok(total.powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TimeGrid, TorusGrid};
    use std::f64::consts::PI;

    #[test]
    fn constants() {
        let g = TorusGrid::new(2, 16).unwrap();
        let one = ScalarField::constant(g, 1.0).unwrap();
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert!((lp_space_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let c = ScalarField::constant(g, -2.5).unwrap();
        assert!((lp_space_norm(&c, 3.0).unwrap() - 2.5).abs() < 1e-13);
    }

    #[test]
    fn sine_l2() {
        let g = TorusGrid::new(1, 256).unwrap();
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        assert!((lp_space_norm(&f, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn bad_exponent() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = ScalarField::constant(g, 1.0).unwrap();
        assert!(matches!(
            lp_space_norm(&f, 0.5),
            Err(Error::BadExponent { .. })
        ));
    }

    #[test]
    fn spacetime_examples() {
        let g = TorusGrid::new(1, 64).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let one = Trajectory::from_fn(g, tg, |_, _| 1.0).unwrap();
        assert!((lq_spacetime_norm(&one, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let lin = Trajectory::from_fn(g, tg, |_, t| t).unwrap();
        assert!((lq_spacetime_norm(&lin, 1.0).unwrap() - 0.5).abs() < tg.dt());
        let sep = Trajectory::from_fn(g, tg, |x, t| (-t).exp() * (2.0 * PI * x[0]).sin()).unwrap();
        let exact = ((1.0 - (-2.0f64).exp()) / 4.0).sqrt();
        assert!((lq_spacetime_norm(&sep, 2.0).unwrap() - exact).abs() < 1e-4);
        assert!((exact - 0.4649).abs() < 1e-4);
    }
}
