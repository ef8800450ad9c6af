//! Adaptive Gauss–Kronrod (7, 15) quadrature with an evaluation budget.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Shared evaluation counter; exceeding `budget` aborts the integration.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub used: u64,
    pub limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { used: 0, limit }
    }

    fn charge(&mut self, n: u64) -> Result<()> {
        self.used += n;
        if self.used > self.limit {
            return Err(Error::QuadratureBudgetExceeded { budget: self.limit });
        }
        Ok(())
    }
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = r * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// `∫_a^b f` to `max(abs_tol, rel_tol·|I|)` by recursive bisection; the
/// tolerance is shared between panels in proportion to their width.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    budget: &mut Budget,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    budget.charge(15)?;
    let (whole, err) = gk15(&mut f, a, b);
    let tol = abs_tol.max(rel_tol * whole.abs());
    let span = (b - a).abs();
    let mut stack = vec![(a, b, whole, err, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, v, e, depth)) = stack.pop() {
        if e <= tol * (hi - lo).abs() / span || depth >= 50 {
            total += v;
            continue;
        }
        let m = 0.5 * (lo + hi);
        budget.charge(30)?;
        let (l, el) = gk15(&mut f, lo, m);
        let (r, er) = gk15(&mut f, m, hi);
        stack.push((lo, m, l, el, depth + 1));
        stack.push((m, hi, r, er, depth + 1));
    }
    Ok(total)
}

/// Sum of `integrate` over consecutive panels `edges[i]..edges[i+1]`.
pub fn integrate_panels(
    mut f: impl FnMut(f64) -> f64,
    edges: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    budget: &mut Budget,
) -> Result<f64> {
    let mut s = 0.0;
    for w in edges.windows(2) {
        s += integrate(
            &mut f,
            w[0],
            w[1],
            abs_tol / (edges.len() as f64),
            rel_tol,
            budget,
        )?;
    }
    Ok(s)
}
