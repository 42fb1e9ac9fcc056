//! Linear descriptor systems `d/dt(F x) - C x = f`, `F x(t0) = 0`, and their
//! SVD canonical form.
//!
//! With `F = U diag(Sigma_r, 0) V*` and `x = V x~`, scaling the first `r`
//! equation rows by `Sigma_r^-1` gives
//!
//! ```text
//! d/dt x1 - C1 x1 - C2 x2 = f1
//!         - C3 x1 - C4 x2 = f2
//! ```
//!
//! The uncertainty ball on `f` is taken in these canonical coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::thin_svd;
use crate::grid::Trajectory;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Largest condition number of `C4` accepted by [`CanonicalDescriptor::simulate`].
pub const MAX_ALGEBRAIC_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSystem {
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub t0: f64,
    pub t_end: f64,
}

impl DescriptorSystem {
    pub fn new(f: DMatrix<f64>, c: DMatrix<f64>, t0: f64, t_end: f64) -> Result<Self> {
        if !f.is_square() || f.nrows() == 0 {
            return Err(Error::InvalidParameter("F must be square and non-empty".into()));
        }
        check_dim("rows of C", f.nrows(), c.nrows())?;
        check_dim("columns of C", f.ncols(), c.ncols())?;
        if f.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("F and C must have finite entries".into()));
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must satisfy t0 < T, got [{t0}, {t_end}]"
            )));
        }
        Ok(Self { f, c, t0, t_end })
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDescriptor {
    pub rank: usize,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub c3: DMatrix<f64>,
    pub c4: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Retained singular values of `F`, descending.
    pub sigma_r: DVector<f64>,
    pub t0: f64,
    pub t_end: f64,
}

/// Flips `col` so that its largest-magnitude entry is positive; returns
/// whether it flipped.
fn orient(m: &mut DMatrix<f64>, col: usize) -> bool {
    let i = m.column(col).iamax();
    if m[(i, col)] < 0.0 {
        m.column_mut(col).neg_mut();
        true
    } else {
        false
    }
}

/// Reduces `system` to SVD canonical form. Singular values above
/// `rank_tol * sigma_max` count towards the rank.
pub fn svd_canonical_form(system: &DescriptorSystem, rank_tol: f64) -> Result<CanonicalDescriptor> {
    if !(rank_tol.is_finite() && rank_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rank_tol must be positive, got {rank_tol}")));
    }
    let n = system.n();
    let svd = thin_svd(&system.f)?;
    let mut u = svd.u;
    let mut v = svd.v_t.transpose();
    let sigma = svd.singular_values;

    let sigma_max = sigma[0];
    let rank = sigma.iter().filter(|&&s| s > rank_tol * sigma_max && s > 0.0).count();

    for j in 0..n {
        if j < rank {
            // Paired singular vectors flip together.
            if orient(&mut v, j) {
                u.column_mut(j).neg_mut();
            }
        } else {
            orient(&mut v, j);
            orient(&mut u, j);
        }
    }

    let mut g = u.tr_mul(&system.c) * &v;
    for i in 0..rank {
        g.row_mut(i).scale_mut(1.0 / sigma[i]);
    }
    let a = n - rank;
    Ok(CanonicalDescriptor {
        rank,
        c1: g.view((0, 0), (rank, rank)).into_owned(),
        c2: g.view((0, rank), (rank, a)).into_owned(),
        c3: g.view((rank, 0), (a, rank)).into_owned(),
        c4: g.view((rank, rank), (a, a)).into_owned(),
        u,
        v,
        sigma_r: sigma.rows(0, rank).into_owned(),
        t0: system.t0,
        t_end: system.t_end,
    })
}

impl CanonicalDescriptor {
    /// A system already in canonical form: `F = diag(I_r, 0)`, `U = V = I`.
    pub fn from_blocks(rank: usize, c: DMatrix<f64>, t0: f64, t_end: f64) -> Result<Self> {
        let n = c.nrows();
        if !c.is_square() || n == 0 || rank > n {
            return Err(Error::InvalidParameter(format!(
                "need a square non-empty C and rank <= n, got {}x{} with rank {rank}",
                c.nrows(),
                c.ncols()
            )));
        }
        let system = DescriptorSystem::new(
            DMatrix::from_fn(n, n, |i, j| if i == j && i < rank { 1.0 } else { 0.0 }),
            c,
            t0,
            t_end,
        )?;
        let a = n - rank;
        Ok(Self {
            rank,
            c1: system.c.view((0, 0), (rank, rank)).into_owned(),
            c2: system.c.view((0, rank), (rank, a)).into_owned(),
            c3: system.c.view((rank, 0), (a, rank)).into_owned(),
            c4: system.c.view((rank, rank), (a, a)).into_owned(),
            u: DMatrix::identity(n, n),
            v: DMatrix::identity(n, n),
            sigma_r: DVector::from_element(rank, 1.0),
            t0,
            t_end,
        })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Number of algebraic components `n - r`.
    pub fn algebraic_dim(&self) -> usize {
        self.n() - self.rank
    }

    /// `cond(Sigma_r)`; 1 when `r = 0`.
    pub fn sigma_condition(&self) -> f64 {
        if self.rank == 0 {
            1.0
        } else {
            self.sigma_r[0] / self.sigma_r[self.rank - 1]
        }
    }

    /// Canonical `F = diag(I_r, 0)`.
    pub fn f_canonical(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j && i < self.rank { 1.0 } else { 0.0 })
    }

    /// Canonical `C = [C1 C2; C3 C4]`.
    pub fn c_canonical(&self) -> DMatrix<f64> {
        let (n, r) = (self.n(), self.rank);
        let mut c = DMatrix::zeros(n, n);
        c.view_mut((0, 0), (r, r)).copy_from(&self.c1);
        c.view_mut((0, r), (r, n - r)).copy_from(&self.c2);
        c.view_mut((r, 0), (n - r, r)).copy_from(&self.c3);
        c.view_mut((r, r), (n - r, n - r)).copy_from(&self.c4);
        c
    }

    /// `U diag(Sigma_r, 0) V*`, which reproduces the original `F`.
    pub fn reconstruct_f(&self) -> DMatrix<f64> {
        let n = self.n();
        let d = DMatrix::from_fn(n, n, |i, j| if i == j && i < self.rank { self.sigma_r[i] } else { 0.0 });
        &self.u * d * self.v.transpose()
    }

    /// `x~ = V* x` at every node.
    pub fn to_canonical(&self, x: &Trajectory) -> Result<Trajectory> {
        check_dim("trajectory components", self.n(), x.dim())?;
        x.map(self.n(), |s| self.v.tr_mul(s))
    }

    /// `x = V x~` at every node.
    pub fn from_canonical(&self, x_tilde: &Trajectory) -> Result<Trajectory> {
        check_dim("trajectory components", self.n(), x_tilde.dim())?;
        x_tilde.map(self.n(), |s| &self.v * s)
    }

    /// Maps an original-coordinate forcing `f` to canonical equation rows:
    /// `diag(Sigma_r^-1, I) U* f`.
    pub fn forcing_to_canonical(&self, f: &Trajectory) -> Result<Trajectory> {
        check_dim("forcing components", self.n(), f.dim())?;
        f.map(self.n(), |s| {
            let mut g = self.u.tr_mul(s);
            for i in 0..self.rank {
                g[i] /= self.sigma_r[i];
            }
            g
        })
    }

    fn algebraic_inverse(&self) -> Result<DMatrix<f64>> {
        let a = self.algebraic_dim();
        if a == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let sv = thin_svd(&self.c4)?.singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_ALGEBRAIC_CONDITION) {
            return Err(Error::IndexNotOne { condition });
        }
        self.c4
            .clone()
            .try_inverse()
            .ok_or(Error::IndexNotOne { condition: f64::INFINITY })
    }

    /// Forward simulation of an index-1 canonical system driven by the
    /// canonical forcing `f`, with `x1(t0) = 0`.
    ///
    /// `x1` is integrated with the trapezoidal rule and
    /// `x2 = -C4^-1 (C3 x1 + f2)` is evaluated at the nodes.
    pub fn simulate(&self, f: &Trajectory) -> Result<Trajectory> {
        check_dim("forcing components", self.n(), f.dim())?;
        let (r, a) = (self.rank, self.algebraic_dim());
        let k = self.algebraic_inverse()?;
        let grid = *f.grid();
        let h = grid.step();

        let reduced = &self.c1 - &self.c2 * &k * &self.c3;
        let drive = |s: &DVector<f64>| -> DVector<f64> {
            s.rows(0, r) - &self.c2 * (&k * s.rows(r, a))
        };
        let id = DMatrix::<f64>::identity(r, r);
        let implicit = (&id - &reduced * (0.5 * h)).lu();
        let explicit = &id + &reduced * (0.5 * h);

        let mut x1 = Vec::with_capacity(grid.len());
        x1.push(DVector::zeros(r));
        let mut g_prev = drive(f.value(0));
        for i in 0..grid.intervals() {
            let g_next = drive(f.value(i + 1));
            let rhs = &explicit * &x1[i] + (&g_prev + &g_next) * (0.5 * h);
            let next = implicit
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidParameter("step too large for the trapezoidal rule".into()))?;
            x1.push(next);
            g_prev = g_next;
        }
        let values = x1
            .into_iter()
            .zip(f.values())
            .map(|(x1, s)| {
                let x2 = -(&k * (&self.c3 * &x1 + s.rows(r, a)));
                DVector::from_iterator(r + a, x1.iter().chain(x2.iter()).copied())
            })
            .collect();
        Trajectory::new(grid, self.n(), values)
    }
}
