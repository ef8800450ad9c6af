//! Least-squares slope fits used by refinement studies.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.len().min(y.len()),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Slope of `log q` against `log h`.
pub fn loglog_slope(h: &[f64], q: &[f64]) -> Result<LinearFit> {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderVerdict {
    Convergent,
    Divergent,
}

/// Classifies a sequence of partial values `S_k` computed at scales `s_k`
/// decreasing to zero: fits `log |S_{k+1} − S_k|` against `log(1/s_k)`;
/// a negative slope means the increments shrink geometrically.
pub fn ladder_verdict(scales: &[f64], partial: &[f64]) -> Result<(LadderVerdict, f64)> {
    if scales.len() != partial.len() || scales.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: scales.len().min(partial.len()),
        });
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 1..partial.len() {
        let inc = (partial[k] - partial[k - 1]).abs();
        if inc > 0.0 {
            x.push((1.0 / scales[k]).ln());
            y.push(inc.ln());
        }
    }
    if x.len() < 2 {
        return Ok((LadderVerdict::Convergent, f64::NEG_INFINITY));
    }
    let fit = linear_fit(&x, &y)?;
    let verdict = if fit.slope < 0.0 {
        LadderVerdict::Convergent
    } else {
        LadderVerdict::Divergent
    };
    Ok((verdict, fit.slope))
}
