//! Discretize-then-optimize verification of the descriptor estimator.
//!
//! The descriptor operator `phi -> d/dt(F phi) - C phi` with `F phi(t0) = 0`
//! is discretized into an explicit matrix `L_h` acting on stacked node
//! values, and the full-state observation into `H_h = diag(sqrt(w_i))` with
//! trapezoidal weights `w_i`. Euclidean inner products of the weighted
//! vectors then approximate `L2(t0, T)` inner products, so
//! [`crate::operator`] applies unchanged. Its answers converge to those of
//! [`crate::bvp`] as the grid is refined, but the two are not equal at any
//! finite step.

use nalgebra::{DMatrix, DVector};

use crate::bvp::{BvpCoefficients, DaeEstimate, DaeEstimator};
use crate::descriptor::CanonicalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::grid::{TimeGrid, Trajectory};
use crate::operator::{AposterioriResult, EstimationProblem, EulerSolution, Outcome};

/// Quadratic weight of the `F phi(t0) = 0` penalty rows.
pub const INITIAL_PENALTY_WEIGHT: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct DiscretizedProblem {
    problem: EstimationProblem,
    grid: TimeGrid,
    weights: Vec<f64>,
    n: usize,
    rank: usize,
}

/// Builds `L_h` ((N n + r) x ((N + 1) n)) and `H_h` for a canonical system.
pub fn discretize(canonical: &CanonicalDescriptor, grid: TimeGrid) -> Result<DiscretizedProblem> {
    let (n, r) = (canonical.n(), canonical.rank);
    let intervals = grid.intervals();
    let cols = grid.len() * n;
    let h = grid.step();
    let root_h = h.sqrt();
    let f = canonical.f_canonical();
    let c = canonical.c_canonical();

    let next = (&f / h - &c * 0.5) * root_h;
    let prev = (-&f / h - &c * 0.5) * root_h;
    let mut l_h = DMatrix::zeros(intervals * n + r, cols);
    for i in 0..intervals {
        l_h.view_mut((i * n, i * n), (n, n)).copy_from(&prev);
        l_h.view_mut((i * n, (i + 1) * n), (n, n)).copy_from(&next);
    }
    let penalty = INITIAL_PENALTY_WEIGHT.sqrt();
    for j in 0..r {
        l_h[(intervals * n + j, j)] = penalty;
    }

    let weights = grid.trapezoid_weights();
    let h_h = DMatrix::from_diagonal(&DVector::from_iterator(
        cols,
        weights.iter().flat_map(|w| std::iter::repeat_n(w.sqrt(), n)),
    ));
    Ok(DiscretizedProblem {
        problem: EstimationProblem::new(l_h, h_h)?,
        grid,
        weights,
        n,
        rank: r,
    })
}

impl DiscretizedProblem {
    pub fn problem(&self) -> &EstimationProblem {
        &self.problem
    }

    pub fn l_h(&self) -> &DMatrix<f64> {
        self.problem.l()
    }

    pub fn h_h(&self) -> &DMatrix<f64> {
        self.problem.h()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn check(&self, tr: &Trajectory) -> Result<()> {
        if *tr.grid() != self.grid {
            return Err(Error::GridMismatch(format!(
                "trajectory grid {:?} differs from discretization grid {:?}",
                tr.grid(),
                self.grid
            )));
        }
        check_dim("trajectory components", self.n, tr.dim())
    }

    /// Node values stacked into one vector.
    pub fn stack(&self, tr: &Trajectory) -> Result<DVector<f64>> {
        self.check(tr)?;
        Ok(DVector::from_iterator(
            self.grid.len() * self.n,
            tr.values().iter().flat_map(|v| v.iter().copied()),
        ))
    }

    pub fn unstack(&self, phi: &DVector<f64>) -> Result<Trajectory> {
        check_dim("stacked node values", self.grid.len() * self.n, phi.len())?;
        let values = (0..self.grid.len())
            .map(|i| phi.rows(i * self.n, self.n).into_owned())
            .collect();
        Trajectory::new(self.grid, self.n, values)
    }

    /// `H_h y`.
    pub fn weighted_observation(&self, y: &Trajectory) -> Result<DVector<f64>> {
        Ok(self.h_h() * self.stack(y)?)
    }

    /// Direction whose Euclidean pairing with node values is the
    /// trapezoidal `int (ell, phi) dt`.
    pub fn weighted_direction(&self, ell: &Trajectory) -> Result<DVector<f64>> {
        let mut v = self.stack(ell)?;
        for (i, w) in self.weights.iter().enumerate() {
            v.rows_mut(i * self.n, self.n).scale_mut(*w);
        }
        Ok(v)
    }

    /// Midpoint values of `d/dt(F phi) - C phi` from the interval rows of
    /// `L_h phi`.
    pub fn interval_values(&self, l_phi: &DVector<f64>) -> Vec<DVector<f64>> {
        let root_h = self.grid.step().sqrt();
        (0..self.grid.intervals())
            .map(|i| l_phi.rows(i * self.n, self.n) / root_h)
            .collect()
    }
}

/// A posteriori estimate of the discretized problem for observations `y`.
pub fn oracle_estimate(dp: &DiscretizedProblem, y: &Trajectory) -> Result<AposterioriResult> {
    dp.problem.aposteriori_estimate(&dp.weighted_observation(y)?, &[])
}

/// Euler solution of the discretized problem for direction `ell`.
pub fn oracle_euler(dp: &DiscretizedProblem, ell: &Trajectory) -> Result<Outcome<EulerSolution>> {
    dp.problem.solve_euler(&dp.weighted_direction(ell)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub intervals: usize,
    /// Trapezoidal L2 norm of `x_hat(bvp) - x_hat(oracle)`.
    pub x_l2: f64,
    pub x_max: f64,
    /// Midpoint L2 norm of the `q_hat` difference (BVP values averaged to
    /// interval midpoints).
    pub q_l2: f64,
    pub q_max: f64,
    pub consistency_rel: f64,
    pub factor_rel: f64,
}

/// `|a - b| / max(1, |a|, |b|)`; consistency and factor live in `[0, 1]`.
fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn compare(bvp: &DaeEstimate, oracle: &AposterioriResult, dp: &DiscretizedProblem) -> Result<ComparisonReport> {
    if *bvp.x_hat.grid() != dp.grid {
        return Err(Error::GridMismatch("BVP and oracle grids differ".into()));
    }
    let x_oracle = dp.unstack(&oracle.phi_hat)?;
    let dx = bvp.x_hat.sub(&x_oracle)?;

    let h = dp.grid.step();
    let q_mid = dp.interval_values(&oracle.q_hat);
    let (mut q_sq, mut q_max) = (0.0, 0.0_f64);
    for (i, qo) in q_mid.iter().enumerate() {
        let qb = (bvp.q_hat.value(i) + bvp.q_hat.value(i + 1)) * 0.5;
        let d = qb - qo;
        q_sq += h * d.norm_squared();
        q_max = q_max.max(d.amax());
    }
    let oracle_factor = oracle.factor.unwrap_or(f64::NAN);
    Ok(ComparisonReport {
        intervals: dp.grid.intervals(),
        x_l2: dx.l2_norm(),
        x_max: dx.max_abs(),
        q_l2: q_sq.sqrt(),
        q_max,
        consistency_rel: relative_difference(bvp.consistency, oracle.consistency),
        factor_rel: relative_difference(bvp.factor, oracle_factor),
    })
}

/// Differences between the BVP and the oracle over nested grids.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub reports: Vec<ComparisonReport>,
    /// `log2` ratios of successive `x_l2` differences (per halving of `h`).
    pub pairwise_orders: Vec<f64>,
    /// Least-squares slope of `log x_l2` against `log h`.
    pub fitted_order: f64,
}

impl RefinementStudy {
    /// Runs BVP and oracle on each grid of `intervals` (ascending), with
    /// observations produced by `observe`.
    pub fn run(
        canonical: &CanonicalDescriptor,
        coeffs: &BvpCoefficients,
        intervals: &[usize],
        mut observe: impl FnMut(TimeGrid) -> Result<Trajectory>,
    ) -> Result<Self> {
        if intervals.len() < 2 || intervals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "refinement needs at least two strictly increasing grid sizes".into(),
            ));
        }
        let mut reports = Vec::with_capacity(intervals.len());
        for &n in intervals {
            let grid = TimeGrid::new(canonical.t0, canonical.t_end, n)?;
            let y = observe(grid)?;
            let bvp = DaeEstimator::with_coefficients(coeffs.clone(), grid)?.estimate(&y)?;
            let dp = discretize(canonical, grid)?;
            let oracle = oracle_estimate(&dp, &y)?;
            reports.push(compare(&bvp, &oracle, &dp)?);
        }
        let steps: Vec<f64> = intervals
            .iter()
            .map(|&n| (canonical.t_end - canonical.t0) / n as f64)
            .collect();
        let diffs: Vec<f64> = reports.iter().map(|r| r.x_l2).collect();
        let pairwise_orders = diffs
            .windows(2)
            .zip(steps.windows(2))
            .map(|(d, s)| (d[0] / d[1]).ln() / (s[0] / s[1]).ln())
            .collect();
        Ok(Self {
            fitted_order: fitted_slope(&steps, &diffs),
            reports,
            pairwise_orders,
        })
    }

    pub fn max_x_l2(&self) -> f64 {
        self.reports.iter().map(|r| r.x_l2).fold(0.0, f64::max)
    }

    /// Whether the differences shrink monotonically under refinement.
    pub fn decreasing(&self) -> bool {
        self.reports.windows(2).all(|w| w[1].x_l2 < w[0].x_l2)
    }
}

/// Slope of the least-squares line through `(ln h, ln e)`.
pub fn fitted_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = steps.iter().zip(errors).map(|(h, e)| (h.ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
