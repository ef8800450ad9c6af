//! Periodic lattices on the unit torus and the fields that live on them.
//!
//! Cell `i` along an axis is centred at `i * h`, so the origin is a cell
//! centre. Flat indices run axis 0 fastest: `idx = i0 + n * i1`.

mod io;
mod norms;
pub(crate) mod ops;

pub use io::{read_binary, read_csv, write_binary, write_csv, FieldData};
pub use norms::{lp_space_norm, lq_spacetime_norm, weighted_lp_norm};
pub use ops::{
    elliptic_apply, elliptic_apply_transpose, ellipticity_certificate, gradient_central,
    one_sided_quotients, second_differences,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n_per_axis: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::DimensionUnsupported(d));
        }
        if n_per_axis < MIN_CELLS {
            return Err(Error::InvalidInput(format!(
                "n_per_axis must be at least {MIN_CELLS}, got {n_per_axis}"
            )));
        }
        Ok(TorusGrid { d, n: n_per_axis })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Measure of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        (i0 % self.n)
            + if self.d == 2 {
                self.n * (i1 % self.n)
            } else {
                0
            }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.d == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let [i0, i1] = self.multi_index(idx);
        let h = self.h();
        [i0 as f64 * h, i1 as f64 * h]
    }

    /// Neighbour of `idx` shifted by `offset` cells along `axis`, wrapping.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut m = self.multi_index(idx);
        let n = self.n as isize;
        m[axis] = (m[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(m[0], m[1])
    }

    /// Shortest periodic displacement from `center` to the centre of cell `idx`.
    pub fn displacement(&self, idx: usize, center: [f64; 2]) -> [f64; 2] {
        let x = self.coord(idx);
        let mut out = [0.0; 2];
        for k in 0..self.d {
            let mut r = x[k] - center[k];
            r -= r.round();
            out[k] = r;
        }
        out
    }

    /// Index of the cell whose centre is nearest to `x`.
    pub fn nearest_cell(&self, x: [f64; 2]) -> usize {
        let n = self.n as f64;
        let wrap = |v: f64| ((v * n).round().rem_euclid(n)) as usize % self.n;
        self.index(wrap(x[0]), if self.d == 2 { wrap(x[1]) } else { 0 })
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(d={}, n={}) vs (d={}, n={})",
                self.d, self.n, other.d, other.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
            return Err(Error::InvalidInput(format!(
                "time interval [{t0}, {t1}] is empty"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("n_steps must be positive".into()));
        }
        Ok(TimeGrid { t0, t1, n_steps })
    }

    /// Uniform grid with step as close to `dt` as possible from below.
    pub fn with_max_step(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let n = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(t0, t1, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    /// Index of the time level nearest to `t`, clamped to the grid.
    pub fn nearest_level(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt()).round();
        k.clamp(0.0, self.n_steps as f64) as usize
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    /// Trapezoid weights in time (they sum to `t1 - t0`).
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

fn check_finite(values: impl Iterator<Item = f64>) -> Result<()> {
    for (cell, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { cell });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        check_finite(values.iter().copied())?;
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    /// Validates finiteness of a vector produced internally.
    pub(crate) fn from_vec_checked(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        check_finite(values.iter().copied())?;
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.coord(i))).collect())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Midpoint-rule integral over the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L2 pairing `h^d Σ f g`.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_vec_checked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Self::from_vec_checked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `α self + β other`.
    pub fn axpby(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        self.zip_map(other, |a, b| alpha * a + beta * b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    /// Components beyond `d` are ignored and stored as zero.
    pub fn new(grid: TorusGrid, mut values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} vectors for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if grid.d() == 1 {
            for v in values.iter_mut() {
                v[1] = 0.0;
            }
        }
        check_finite(values.iter().flat_map(|v| v.iter().copied())).map_err(|e| match e {
            Error::NonFinite { cell } => Error::NonFinite { cell: cell / 2 },
            e => e,
        })?;
        Ok(VectorField { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<[f64; 2]>) -> Self {
        VectorField { grid, values }
    }

    pub fn constant(grid: TorusGrid, v: [f64; 2]) -> Result<Self> {
        Self::new(grid, vec![v; grid.len()])
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        VectorField {
            grid,
            values: vec![[0.0; 2]; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.coord(i))).collect())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> [f64; 2] {
        self.values[idx]
    }

    pub fn component(&self, axis: usize) -> ScalarField {
        ScalarField::from_vec_unchecked(self.grid, self.values.iter().map(|v| v[axis]).collect())
    }

    /// Pointwise Euclidean norm.
    pub fn norm(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.grid,
            self.values.iter().map(|v| v[0].hypot(v[1])).collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0)
    }
}

/// Symmetric diffusion matrix per cell, stored as `(a11, a12, a22)`.
/// For `d = 1` only `a11` is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefField {
    grid: TorusGrid,
    values: Vec<[f64; 3]>,
}

impl CoefField {
    pub fn new(grid: TorusGrid, mut values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} matrices for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if grid.d() == 1 {
            for v in values.iter_mut() {
                v[1] = 0.0;
                v[2] = 0.0;
            }
        }
        for (cell, v) in values.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { cell });
            }
        }
        Ok(CoefField { grid, values })
    }

    pub fn identity(grid: TorusGrid) -> Self {
        Self::scaled_identity(grid, 1.0)
    }

    pub fn scaled_identity(grid: TorusGrid, s: f64) -> Self {
        CoefField::new(grid, vec![[s, 0.0, s]; grid.len()]).expect("finite constant")
    }

    pub fn constant(grid: TorusGrid, a11: f64, a12: f64, a22: f64) -> Result<Self> {
        Self::new(grid, vec![[a11, a12, a22]; grid.len()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> [f64; 3]) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.coord(i))).collect())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> [f64; 3] {
        self.values[idx]
    }

    /// `Some((a11, a12, a22))` when the field is spatially constant.
    pub fn as_constant(&self) -> Option<[f64; 3]> {
        let first = self.values[0];
        self.values.iter().all(|v| *v == first).then_some(first)
    }

    /// Cellwise average of the entries.
    pub fn mean(&self) -> [f64; 3] {
        let n = self.values.len() as f64;
        let mut m = [0.0; 3];
        for v in &self.values {
            for k in 0..3 {
                m[k] += v[k];
            }
        }
        m.map(|x| x / n)
    }

    /// Largest eigenvalue over all cells.
    pub fn max_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .map(|&a| eigen_range(a, self.grid.d()).1)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn eigen_range(a: [f64; 3], d: usize) -> (f64, f64) {
    if d == 1 {
        return (a[0], a[0]);
    }
    let mean = 0.5 * (a[0] + a[2]);
    let rad = (0.5 * (a[0] - a[2])).hypot(a[1]);
    (mean - rad, mean + rad)
}

/// Time-indexed sequence of scalar fields, one per level of a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TorusGrid,
    time: TimeGrid,
    frames: Vec<ScalarField>,
}

impl Trajectory {
    pub fn new(time: TimeGrid, frames: Vec<ScalarField>) -> Result<Self> {
        if frames.len() != time.n_steps() + 1 {
            return Err(Error::GridMismatch(format!(
                "{} frames for {} time levels",
                frames.len(),
                time.n_steps() + 1
            )));
        }
        let grid = *frames[0].grid();
        for f in &frames {
            grid.check_same(f.grid())?;
        }
        Ok(Trajectory { grid, time, frames })
    }

    pub fn from_fn(
        grid: TorusGrid,
        time: TimeGrid,
        f: impl Fn([f64; 2], f64) -> f64,
    ) -> Result<Self> {
        let frames = time
            .times()
            .map(|t| ScalarField::from_fn(grid, |x| f(x, t)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(time, frames)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn frames(&self) -> &[ScalarField] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &ScalarField {
        &self.frames[k]
    }

    pub fn last(&self) -> &ScalarField {
        self.frames.last().expect("at least one frame")
    }

    pub fn into_frames(self) -> Vec<ScalarField> {
        self.frames
    }

    /// Levels `0..=k` as a trajectory on `[t0, t_k]`.
    pub fn prefix(&self, k: usize) -> Result<Trajectory> {
        if k == 0 || k > self.time.n_steps() {
            return Err(Error::InvalidInput(format!(
                "prefix level {k} outside 1..={}",
                self.time.n_steps()
            )));
        }
        Trajectory::new(
            TimeGrid::new(self.time.t0(), self.time.time(k), k)?,
            self.frames[..=k].to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_small_n_and_bad_d() {
        assert!(TorusGrid::new(2, 7).is_err());
        assert!(matches!(
            TorusGrid::new(3, 16),
            Err(Error::DimensionUnsupported(3))
        ));
    }

    #[test]
    fn spacing_times_n_is_one() {
        for n in [8, 10, 64, 96, 1000] {
            let g = TorusGrid::new(1, n).unwrap();
            assert_eq!(g.h() * n as f64, 1.0);
        }
    }

    #[test]
    fn shift_wraps() {
        let g = TorusGrid::new(2, 8).unwrap();
        let i = g.index(0, 7);
        assert_eq!(g.shift(i, 0, -1), g.index(7, 7));
        assert_eq!(g.shift(i, 1, 1), g.index(0, 0));
    }

    #[test]
    fn displacement_is_shortest() {
        let g = TorusGrid::new(1, 10).unwrap();
        let r = g.displacement(9, [0.0, 0.0]);
        assert!((r[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let g = TorusGrid::new(1, 8).unwrap();
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(
            ScalarField::new(g, v),
            Err(Error::NonFinite { cell: 3 })
        ));
    }

    #[test]
    fn time_grid_step() {
        let t = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(t.dt(), 0.25);
        assert_eq!(t.time(4), 1.0);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        let t = TimeGrid::with_max_step(0.0, 1.0, 0.3).unwrap();
        assert_eq!(t.n_steps(), 4);
    }
}
