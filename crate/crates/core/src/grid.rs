//! Uniform time grids and sampled vector trajectories.
//!
//! Trajectories are read as piecewise-linear in time, so integrals use the
//! trapezoidal rule on the grid nodes.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, intervals: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must satisfy t0 < T, got [{t0}, {t_end}]"
            )));
        }
        if intervals < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 intervals, got {intervals}"
            )));
        }
        Ok(Self { t0, t_end, intervals })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of intervals `N`; there are `N + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.t_end
        } else {
            self.t0 + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// Trapezoidal quadrature weights: `h/2, h, ..., h, h/2`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.len())
            .map(|i| if i == 0 || i == self.intervals { 0.5 * h } else { h })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    values: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("trajectory samples", grid.len(), values.len())?;
        for v in &values {
            check_dim("trajectory sample", dim, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("trajectory has non-finite entries".into()));
            }
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![DVector::zeros(dim); grid.len()],
        }
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> DVector<f64>) -> Result<Self> {
        let values = grid.nodes().map(&mut f).collect();
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn into_values(self) -> Vec<DVector<f64>> {
        self.values
    }

    /// Components `start .. start + len` of every sample.
    pub fn components(&self, start: usize, len: usize) -> Trajectory {
        Trajectory {
            grid: self.grid,
            dim: len,
            values: self.values.iter().map(|v| v.rows(start, len).into_owned()).collect(),
        }
    }

    /// Stacks the components of `self` on top of those of `other`.
    pub fn stack(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_same_grid(other)?;
        let dim = self.dim + other.dim;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| DVector::from_iterator(dim, a.iter().chain(b.iter()).copied()))
            .collect();
        Ok(Trajectory { grid: self.grid, dim, values })
    }

    pub fn map(&self, dim: usize, mut f: impl FnMut(&DVector<f64>) -> DVector<f64>) -> Result<Trajectory> {
        Trajectory::new(self.grid, dim, self.values.iter().map(&mut f).collect())
    }

    pub fn scaled(&self, alpha: f64) -> Trajectory {
        Trajectory {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_same_shape(other)?;
        Ok(Trajectory {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_same_shape(other)?;
        Ok(Trajectory {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Pointwise products `(self(t_i), other(t_i))`.
    pub fn pointwise_dot(&self, other: &Trajectory) -> Result<Vec<f64>> {
        self.check_same_shape(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a.dot(b)).collect())
    }

    /// Trapezoidal approximation of `int (self, other) dt`.
    pub fn inner(&self, other: &Trajectory) -> Result<f64> {
        let products = self.pointwise_dot(other)?;
        Ok(trapezoid(&self.grid, &products))
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).expect("same shape").max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// Piecewise-linear value at time `t` (clamped to the horizon).
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let g = &self.grid;
        let s = ((t - g.t0()) / g.step()).clamp(0.0, g.intervals() as f64);
        let i = (s.floor() as usize).min(g.intervals() - 1);
        let theta = s - i as f64;
        &self.values[i] * (1.0 - theta) + &self.values[i + 1] * theta
    }

    /// Resamples onto another grid by piecewise-linear interpolation.
    pub fn resample(&self, grid: TimeGrid) -> Trajectory {
        Trajectory {
            grid,
            dim: self.dim,
            values: grid.nodes().map(|t| self.interpolate(t)).collect(),
        }
    }

    pub fn check_same_grid(&self, other: &Trajectory) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    fn check_same_shape(&self, other: &Trajectory) -> Result<()> {
        self.check_same_grid(other)?;
        check_dim("trajectory components", self.dim, other.dim)
    }
}

/// Trapezoidal rule for node values on `grid`.
pub fn trapezoid(grid: &TimeGrid, values: &[f64]) -> f64 {
    grid.trapezoid_weights()
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.node(4), 1.0);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_is_exact_for_linear_functions() {
        let g = TimeGrid::new(-1.0, 2.0, 7).unwrap();
        let vals: Vec<f64> = g.nodes().map(|t| 3.0 * t + 1.0).collect();
        // int_{-1}^{2} (3t + 1) dt = 1.5 * (4 - 1) + 3 = 7.5
        assert!((trapezoid(&g, &vals) - 7.5).abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_midpoints() {
        let g = TimeGrid::new(0.0, 2.0, 4).unwrap();
        let tr = Trajectory::from_fn(g, 1, |t| DVector::from_element(1, t * t)).unwrap();
        assert_eq!(tr.interpolate(1.0)[0], 1.0);
        assert!((tr.interpolate(0.75)[0] - 0.625).abs() < 1e-15);
        assert_eq!(tr.interpolate(5.0)[0], 4.0);
    }

    #[test]
    fn rejects_wrong_sample_count() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(Trajectory::new(g, 1, vec![DVector::zeros(1); 2]).is_err());
    }
}
