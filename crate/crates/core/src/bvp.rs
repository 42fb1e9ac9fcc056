//! Minimax a posteriori estimation for canonical descriptor systems.
//!
//! For `d/dt x1 - C1 x1 - C2 x2 = f1`, `-C3 x1 - C4 x2 = f2`, `x1(t0) = 0`,
//! observed through `y = x + eta` with `int (|f|^2 + |eta|^2) dt <= 1`, the
//! estimate `x_hat = (x1, x2)` solves the two-point boundary value problem
//!
//! ```text
//! x1' = A x1 + B q1 + C2 S y2,               x1(t0) = 0
//! q1' = W x1 + D q1 + C3* C4 S y2 - y1,       q1(T)  = 0
//! x2  = S (-C4* C3 x1 + C2* q1 + y2)
//! q2  = -(I - C4 S C4*) C3 x1 - C4 S (C2* q1 + y2)
//! ```
//!
//! with `S = (I + C4* C4)^-1`, `A = C1 - C2 S C4* C3`, `B = C2 S C2* + I`,
//! `W = C3* (I - C4 S C4*) C3 + I` and `D = -C1* + C3* C4 S C2* = -A*`.
//!
//! The BVP is discretized with the trapezoidal (Crank–Nicolson) rule on a
//! uniform grid. Each interval contributes `2r` equations; interleaving the
//! `x1` rows of interval `k-1` with the `q1` rows of interval `k` makes the
//! global system block tridiagonal with `2r x 2r` blocks, which is factored
//! once and reused for every right-hand side.

use nalgebra::{DMatrix, DVector};

use crate::descriptor::CanonicalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::grid::{trapezoid, TimeGrid, Trajectory};
use crate::linalg::{BlockLu, BlockTridiagonal};

/// `consistency` may exceed 1 by this much before the set counts as empty.
pub const EMPTY_SET_TOL: f64 = 1e-10;

/// Roundoff allowance (relative to `|ell|^2`) for negative `int (ell, p) dt`.
pub const NEGATIVE_ERROR_TOL: f64 = 1e-12;

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct BvpCoefficients {
    pub rank: usize,
    /// `(I + C4* C4)^-1`
    pub s: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// `C2 S`: drive of `y2` in the `x1` equation.
    pub g_x: DMatrix<f64>,
    /// `C3* C4 S`: drive of `y2` in the `q1` equation.
    pub g_q: DMatrix<f64>,
    c2: DMatrix<f64>,
    c3: DMatrix<f64>,
    c4: DMatrix<f64>,
    observation_sign: f64,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Coefficients of the estimator BVP for a canonical system.
pub fn assemble_coefficients(canonical: &CanonicalDescriptor) -> BvpCoefficients {
    let (r, na) = (canonical.rank, canonical.algebraic_dim());
    let (c1, c2, c3, c4) = (&canonical.c1, &canonical.c2, &canonical.c3, &canonical.c4);
    let id_r = DMatrix::<f64>::identity(r, r);
    let id_a = DMatrix::<f64>::identity(na, na);

    let gram = &id_a + c4.tr_mul(c4);
    let s = symmetrize(
        gram.cholesky()
            .expect("I + C4*C4 is positive definite")
            .inverse(),
    );
    let c4s = c4 * &s;
    let a = c1 - c2 * &s * c4.transpose() * c3;
    let b = symmetrize(c2 * &s * c2.transpose() + &id_r);
    let w = symmetrize(c3.transpose() * (&id_a - &c4s * c4.transpose()) * c3 + &id_r);
    let d = -c1.transpose() + c3.transpose() * &c4s * c2.transpose();
    BvpCoefficients {
        rank: r,
        g_x: c2 * &s,
        g_q: c3.transpose() * &c4s,
        s,
        a,
        b,
        w,
        d,
        c2: c2.clone(),
        c3: c3.clone(),
        c4: c4.clone(),
        observation_sign: -1.0,
    }
}

impl BvpCoefficients {
    pub fn n(&self) -> usize {
        self.rank + self.s.nrows()
    }

    pub fn algebraic_dim(&self) -> usize {
        self.s.nrows()
    }

    /// Flips the sign of the `y1` term in the `q1` equation. Exists only so
    /// verification pipelines can demonstrate that they catch a wrong
    /// sign convention.
    #[doc(hidden)]
    pub fn corrupt_observation_sign(&mut self) {
        self.observation_sign = -self.observation_sign;
    }

    /// `[x1; q1]` drive term for an observation sample.
    fn forcing(&self, y: &DVector<f64>) -> DVector<f64> {
        let (r, na) = (self.rank, self.algebraic_dim());
        let y1 = y.rows(0, r);
        let y2 = y.rows(r, na);
        let fx = &self.g_x * y2;
        let fq = &self.g_q * y2 + y1 * self.observation_sign;
        DVector::from_iterator(2 * r, fx.iter().chain(fq.iter()).copied())
    }

    /// Pointwise `(x2, q2)` from `(x1, q1, y2)`.
    pub fn recover_algebraic_at(
        &self,
        x1: &DVector<f64>,
        q1: &DVector<f64>,
        y2: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let c3x1 = &self.c3 * x1;
        let drive = self.c2.tr_mul(q1) + y2;
        let x2 = &self.s * (&drive - self.c4.tr_mul(&c3x1));
        let c4s = &self.c4 * &self.s;
        let q2 = -(&c3x1 - &c4s * self.c4.tr_mul(&c3x1)) - c4s * drive;
        (x2, q2)
    }

    fn block_system(&self, grid: &TimeGrid) -> BlockTridiagonal {
        let r = self.rank;
        let m = 2 * r;
        let h = grid.step();
        let mut hamiltonian = DMatrix::zeros(m, m);
        hamiltonian.view_mut((0, 0), (r, r)).copy_from(&self.a);
        hamiltonian.view_mut((0, r), (r, r)).copy_from(&self.b);
        hamiltonian.view_mut((r, 0), (r, r)).copy_from(&self.w);
        hamiltonian.view_mut((r, r), (r, r)).copy_from(&self.d);
        let id = DMatrix::<f64>::identity(m, m);
        // interval i: next * z_{i+1} + prev * z_i = h/2 (g_i + g_{i+1})
        let next = &id - &hamiltonian * (0.5 * h);
        let prev = -&id - &hamiltonian * (0.5 * h);

        let top = |mat: &DMatrix<f64>| mat.rows(0, r).into_owned();
        let bot = |mat: &DMatrix<f64>| mat.rows(r, r).into_owned();
        let stack = |upper: DMatrix<f64>, lower: DMatrix<f64>| {
            let mut out = DMatrix::zeros(m, m);
            out.rows_mut(0, r).copy_from(&upper);
            out.rows_mut(r, r).copy_from(&lower);
            out
        };
        let zeros = DMatrix::<f64>::zeros(r, m);
        let mut left_bc = DMatrix::zeros(r, m);
        left_bc.view_mut((0, 0), (r, r)).fill_with_identity();
        let mut right_bc = DMatrix::zeros(r, m);
        right_bc.view_mut((0, r), (r, r)).fill_with_identity();

        let nb = grid.len();
        let mut lower = Vec::with_capacity(nb);
        let mut diag = Vec::with_capacity(nb);
        let mut upper = Vec::with_capacity(nb);
        for k in 0..nb {
            let (l, dg, u) = if k == 0 {
                (DMatrix::zeros(m, m), stack(left_bc.clone(), bot(&prev)), stack(zeros.clone(), bot(&next)))
            } else if k + 1 == nb {
                (stack(top(&prev), zeros.clone()), stack(top(&next), right_bc.clone()), DMatrix::zeros(m, m))
            } else {
                (
                    stack(top(&prev), zeros.clone()),
                    stack(top(&next), bot(&prev)),
                    stack(zeros.clone(), bot(&next)),
                )
            };
            lower.push(l);
            diag.push(dg);
            upper.push(u);
        }
        BlockTridiagonal { lower, diag, upper }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeEstimate {
    /// `[x1; x2]` in canonical coordinates.
    pub x_hat: Trajectory,
    /// `[q1; q2]`, the estimated uncertainty `f = L x_hat`.
    pub q_hat: Trajectory,
    pub factor: f64,
    /// `int (y, y - x_hat) dt`.
    pub consistency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalError {
    /// `(int (ell, p) dt)^(1/2)`.
    pub value: f64,
    /// Unclamped `int (ell, p) dt`.
    pub integral: f64,
    /// `(ell(t_i), p(t_i))` at each node.
    pub integrand: Vec<f64>,
    pub p: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Unit-norm (in `L2(t0, T)`) maximizing direction.
    pub ell_star: Trajectory,
    /// `factor * sqrt(lambda_max)`.
    pub value: f64,
    pub lambda_max: f64,
    pub factor: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The estimator BVP on a fixed grid with its block factorization.
#[derive(Debug, Clone)]
pub struct DaeEstimator {
    coeffs: BvpCoefficients,
    grid: TimeGrid,
    factorization: Option<BlockLu>,
}

const HORIZON_TOL: f64 = 1e-12;

impl DaeEstimator {
    pub fn new(canonical: &CanonicalDescriptor, grid: TimeGrid) -> Result<Self> {
        let span = canonical.t_end - canonical.t0;
        if (grid.t0() - canonical.t0).abs() > HORIZON_TOL * span.max(1.0)
            || (grid.t_end() - canonical.t_end).abs() > HORIZON_TOL * span.max(1.0)
        {
            return Err(Error::GridMismatch(format!(
                "grid [{}, {}] does not cover the system horizon [{}, {}]",
                grid.t0(),
                grid.t_end(),
                canonical.t0,
                canonical.t_end
            )));
        }
        Self::with_coefficients(assemble_coefficients(canonical), grid)
    }

    pub fn with_coefficients(coeffs: BvpCoefficients, grid: TimeGrid) -> Result<Self> {
        let factorization = if coeffs.rank > 0 {
            Some(coeffs.block_system(&grid).factor()?)
        } else {
            None
        };
        Ok(Self {
            coeffs,
            grid,
            factorization,
        })
    }

    pub fn coefficients(&self) -> &BvpCoefficients {
        &self.coeffs
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn check_input(&self, y: &Trajectory) -> Result<()> {
        if *y.grid() != self.grid {
            return Err(Error::GridMismatch(format!(
                "observation grid {:?} differs from estimator grid {:?}",
                y.grid(),
                self.grid
            )));
        }
        check_dim("observation components", self.coeffs.n(), y.dim())
    }

    /// Differential part `(x1, q1)` of the BVP solution.
    pub fn solve_tpbvp(&self, y: &Trajectory) -> Result<(Trajectory, Trajectory)> {
        self.check_input(y)?;
        let r = self.coeffs.rank;
        let Some(lu) = &self.factorization else {
            return Ok((Trajectory::zeros(self.grid, 0), Trajectory::zeros(self.grid, 0)));
        };
        let h = self.grid.step();
        let g: Vec<DVector<f64>> = y.values().iter().map(|v| self.coeffs.forcing(v)).collect();
        let interval = |i: usize| (&g[i] + &g[i + 1]) * (0.5 * h);
        let nb = self.grid.len();
        let rhs: Vec<DVector<f64>> = (0..nb)
            .map(|k| {
                let mut b = DVector::zeros(2 * r);
                if k > 0 {
                    b.rows_mut(0, r).copy_from(&interval(k - 1).rows(0, r));
                }
                if k + 1 < nb {
                    b.rows_mut(r, r).copy_from(&interval(k).rows(r, r));
                }
                b
            })
            .collect();
        let z = lu.solve(&rhs)?;
        let mut x1: Vec<DVector<f64>> = z.iter().map(|v| v.rows(0, r).into_owned()).collect();
        let mut q1: Vec<DVector<f64>> = z.iter().map(|v| v.rows(r, r).into_owned()).collect();
        x1[0].fill(0.0);
        q1[nb - 1].fill(0.0);
        Ok((Trajectory::new(self.grid, r, x1)?, Trajectory::new(self.grid, r, q1)?))
    }

    /// Algebraic part `(x2, q2)` evaluated pointwise.
    pub fn recover_algebraic(
        &self,
        x1: &Trajectory,
        q1: &Trajectory,
        y: &Trajectory,
    ) -> Result<(Trajectory, Trajectory)> {
        self.check_input(y)?;
        let (r, na) = (self.coeffs.rank, self.coeffs.algebraic_dim());
        check_dim("x1 components", r, x1.dim())?;
        check_dim("q1 components", r, q1.dim())?;
        x1.check_same_grid(y)?;
        q1.check_same_grid(y)?;
        let (x2, q2): (Vec<_>, Vec<_>) = (0..self.grid.len())
            .map(|i| {
                let y2 = y.value(i).rows(r, na).into_owned();
                self.coeffs.recover_algebraic_at(x1.value(i), q1.value(i), &y2)
            })
            .unzip();
        Ok((Trajectory::new(self.grid, na, x2)?, Trajectory::new(self.grid, na, q2)?))
    }

    /// `(x_hat, q_hat)` for data `y`, without the a posteriori factor.
    pub fn solve(&self, y: &Trajectory) -> Result<(Trajectory, Trajectory)> {
        let (x1, q1) = self.solve_tpbvp(y)?;
        let (x2, q2) = self.recover_algebraic(&x1, &q1, y)?;
        Ok((x1.stack(&x2)?, q1.stack(&q2)?))
    }

    pub fn estimate(&self, y: &Trajectory) -> Result<DaeEstimate> {
        let (x_hat, q_hat) = self.solve(y)?;
        let consistency = y.inner(&y.sub(&x_hat)?)?;
        if consistency > 1.0 + EMPTY_SET_TOL {
            return Err(Error::EmptyAposterioriSet { consistency });
        }
        Ok(DaeEstimate {
            x_hat,
            q_hat,
            factor: (1.0 - consistency).max(0.0).sqrt(),
            consistency,
        })
    }

    /// A priori error in direction `ell`: `p` solves the BVP with `y := ell`.
    pub fn directional_error(&self, ell: &Trajectory) -> Result<DirectionalError> {
        let (p, _) = self.solve(ell)?;
        let integrand = ell.pointwise_dot(&p)?;
        let integral = trapezoid(&self.grid, &integrand);
        let allowance = NEGATIVE_ERROR_TOL * ell.inner(ell)?.max(1.0);
        if integral < -allowance {
            return Err(Error::InternalConsistency(format!(
                "int (ell, p) dt = {integral:e} is negative"
            )));
        }
        Ok(DirectionalError {
            value: integral.max(0.0).sqrt(),
            integral,
            integrand,
            p,
        })
    }

    /// Largest a posteriori error over unit directions, by power iteration on
    /// `ell -> p` in `L2(t0, T)`.
    pub fn worst_case_error(&self, y: &Trajectory, tol: f64, max_iter: usize) -> Result<WorstCase> {
        let factor = self.estimate(y)?.factor;
        let n = self.coeffs.n();
        let mut v = Trajectory::from_fn(self.grid, n, |t| {
            DVector::from_fn(n, |j, _| 1.0 + 0.5 * (1.3 * t + 0.7 * (j + 1) as f64).sin())
        })?;
        v = v.scaled(1.0 / v.l2_norm());

        let mut lambda = f64::NAN;
        let mut best = (f64::NEG_INFINITY, v.clone());
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            let (p, _) = self.solve(&v)?;
            let next = v.inner(&p)?;
            if next > best.0 {
                best = (next, v.clone());
            }
            let norm = p.l2_norm();
            if norm == 0.0 {
                break;
            }
            v = p.scaled(1.0 / norm);
            if (next - lambda).abs() < tol * next.abs() {
                lambda = next;
                converged = true;
                break;
            }
            lambda = next;
        }
        let (lambda_max, ell_star) = if converged { (lambda, v) } else { best };
        let lambda_max = lambda_max.max(0.0);
        Ok(WorstCase {
            ell_star,
            value: factor * lambda_max.sqrt(),
            lambda_max,
            factor,
            iterations,
            converged,
        })
    }
}

/// One-shot BVP solve on the grid of `y`.
pub fn solve_tpbvp(coeffs: &BvpCoefficients, y: &Trajectory) -> Result<(Trajectory, Trajectory)> {
    DaeEstimator::with_coefficients(coeffs.clone(), *y.grid())?.solve_tpbvp(y)
}

pub fn recover_algebraic(
    coeffs: &BvpCoefficients,
    x1: &Trajectory,
    q1: &Trajectory,
    y: &Trajectory,
) -> Result<(Trajectory, Trajectory)> {
    let est = DaeEstimator {
        coeffs: coeffs.clone(),
        grid: *y.grid(),
        factorization: None,
    };
    est.recover_algebraic(x1, q1, y)
}

pub fn estimate_trajectory(canonical: &CanonicalDescriptor, y: &Trajectory) -> Result<DaeEstimate> {
    DaeEstimator::new(canonical, *y.grid())?.estimate(y)
}

pub fn directional_error(canonical: &CanonicalDescriptor, ell: &Trajectory) -> Result<DirectionalError> {
    DaeEstimator::new(canonical, *ell.grid())?.directional_error(ell)
}

pub fn worst_case_error(canonical: &CanonicalDescriptor, y: &Trajectory) -> Result<WorstCase> {
    DaeEstimator::new(canonical, *y.grid())?.worst_case_error(y, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)
}
