//! Minimax estimation for the finite-dimensional model
//!
//! ```text
//! y = H phi + eta,    L phi = f,    |f| <= r_f,  |eta| <= r_eta
//! ```
//!
//! The a priori estimate of a linear functional `(ell, phi)` is `(u_hat, y)`
//! with `u_hat = H p_hat` (weighted by the radii), where `p_hat` solves the
//! Euler equations
//!
//! ```text
//! L* z_hat = ell - H* u_hat,     L p_hat = r_f^2 z_hat,     u_hat = r_eta^-2 H p_hat
//! ```
//!
//! i.e. `(r_f^-2 L*L + r_eta^-2 H*H) p_hat = ell`, and its error is
//! `sigma(ell) = (ell, p_hat)^(1/2)`. The error is finite exactly when
//! `ell` lies in `R(L*) + R(H*)`.
//!
//! The a posteriori set `X_y = {phi : |L phi|^2 + |y - H phi|^2 <= 1}` is an
//! ellipsoid centred at `phi_hat`, the minimum-norm solution of
//! `(L*L + H*H) phi_hat = H* y`. Its half-width in direction `ell` is
//! `(1 - (y, y - H phi_hat))^(1/2) * sigma(ell)`.
//!
//! Balanced bounding sets make the affine term of the estimate vanish, so
//! `c_hat` is always zero here.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{MinNormLeastSquares, SymmetricPseudoInverse, DEFAULT_EIGEN_CUTOFF};

pub const DEFAULT_ADMISSIBILITY_TOL: f64 = 1e-8;

/// Outcome of a computation whose value may be unbounded.
///
/// Unbounded errors are ordinary values so callers can tabulate them; the
/// attached report certifies why the direction is not admissible.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Finite(T),
    Infinite(AdmissibilityReport),
}

impl<T> Outcome<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Outcome::Finite(_))
    }

    pub fn finite(&self) -> Option<&T> {
        match self {
            Outcome::Finite(v) => Some(v),
            Outcome::Infinite(_) => None,
        }
    }

    pub fn into_finite(self) -> Option<T> {
        match self {
            Outcome::Finite(v) => Some(v),
            Outcome::Infinite(_) => None,
        }
    }
}

/// Evidence that `ell` does (or does not) split as `L* z + H* u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub z_component: DVector<f64>,
    pub u_component: DVector<f64>,
    /// Distance from `ell` to `R(L*) + R(H*)`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerSolution {
    pub p_hat: DVector<f64>,
    pub z_hat: DVector<f64>,
    pub u_hat: DVector<f64>,
    /// Affine term of the estimate; zero for balanced sets.
    pub c_hat: f64,
    /// Minimax a priori error `(ell, p_hat)^(1/2)`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AposterioriResult {
    pub phi_hat: DVector<f64>,
    pub q_hat: DVector<f64>,
    /// `(y, y - H phi_hat)` (scaled by `r_eta^-2`), the least uncertainty
    /// energy that explains `y`.
    pub consistency: f64,
    /// `sqrt(1 - consistency)`; only defined for unit radii.
    pub factor: Option<f64>,
    /// Half-widths `d_hat(ell)` for the requested directions, in order;
    /// infinite for inadmissible directions. Empty unless radii are unit.
    pub radius: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstDirection {
    /// Unit direction maximizing `sigma(ell)`.
    pub ell_star: DVector<f64>,
    pub sigma_max: f64,
    pub iterations: usize,
}

/// State operator `L` (m x n), observation operator `H` (k x n) and the
/// radii of the uncertainty balls.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    l: DMatrix<f64>,
    h: DMatrix<f64>,
    radius_f: f64,
    radius_eta: f64,
    admissibility_tol: f64,
    eigen_cutoff: f64,
    normal: OnceLock<SymmetricPseudoInverse>,
    decomposition: OnceLock<MinNormLeastSquares>,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl EstimationProblem {
    pub fn new(l: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        if l.ncols() == 0 {
            return Err(Error::InvalidParameter("state dimension must be at least 1".into()));
        }
        check_dim("column count of H", l.ncols(), h.ncols())?;
        if l.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("operators must have finite entries".into()));
        }
        Ok(Self {
            l,
            h,
            radius_f: 1.0,
            radius_eta: 1.0,
            admissibility_tol: DEFAULT_ADMISSIBILITY_TOL,
            eigen_cutoff: DEFAULT_EIGEN_CUTOFF,
            normal: OnceLock::new(),
            decomposition: OnceLock::new(),
        })
    }

    pub fn with_radii(mut self, radius_f: f64, radius_eta: f64) -> Result<Self> {
        self.radius_f = positive("radius_f", radius_f)?;
        self.radius_eta = positive("radius_eta", radius_eta)?;
        self.normal = OnceLock::new();
        Ok(self)
    }

    pub fn with_admissibility_tol(mut self, tol: f64) -> Result<Self> {
        self.admissibility_tol = positive("admissibility tolerance", tol)?;
        Ok(self)
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.l.ncols()
    }

    pub fn radius_f(&self) -> f64 {
        self.radius_f
    }

    pub fn radius_eta(&self) -> f64 {
        self.radius_eta
    }

    pub fn admissibility_tol(&self) -> f64 {
        self.admissibility_tol
    }

    pub fn has_unit_radii(&self) -> bool {
        self.radius_f == 1.0 && self.radius_eta == 1.0
    }

    fn wf(&self) -> f64 {
        self.radius_f.powi(-2)
    }

    fn weta(&self) -> f64 {
        self.radius_eta.powi(-2)
    }

    /// `r_f^-2 L*L + r_eta^-2 H*H`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        self.l.tr_mul(&self.l) * self.wf() + self.h.tr_mul(&self.h) * self.weta()
    }

    fn normal(&self) -> &SymmetricPseudoInverse {
        self.normal
            .get_or_init(|| SymmetricPseudoInverse::new(&self.normal_matrix(), self.eigen_cutoff))
    }

    fn decomposition(&self) -> Result<&MinNormLeastSquares> {
        if let Some(d) = self.decomposition.get() {
            return Ok(d);
        }
        // [L* H*], n x (m + k). The singular-value cutoff is the square
        // root of the eigenvalue cutoff on the normal matrix so both
        // routes agree on the numerical range.
        let mut g = DMatrix::zeros(self.n(), self.l.nrows() + self.h.nrows());
        g.columns_mut(0, self.l.nrows()).copy_from(&self.l.transpose());
        g.columns_mut(self.l.nrows(), self.h.nrows()).copy_from(&self.h.transpose());
        let d = MinNormLeastSquares::new(&g, self.eigen_cutoff.sqrt())?;
        Ok(self.decomposition.get_or_init(|| d))
    }

    /// Minimum-norm split `ell ~ L* z + H* u` and the distance from `ell` to
    /// `R(L*) + R(H*)`.
    pub fn check_direction(&self, ell: &DVector<f64>) -> Result<AdmissibilityReport> {
        check_dim("direction", self.n(), ell.len())?;
        let (m, k) = (self.l.nrows(), self.h.nrows());
        let ell_norm = ell.norm();
        if ell_norm == 0.0 {
            return Ok(AdmissibilityReport {
                admissible: true,
                z_component: DVector::zeros(m),
                u_component: DVector::zeros(k),
                residual_norm: 0.0,
            });
        }
        let w = self.decomposition()?.solve(ell);
        let z = w.rows(0, m).into_owned();
        let u = w.rows(m, k).into_owned();
        let residual = ell - self.l.tr_mul(&z) - self.h.tr_mul(&u);
        let residual_norm = residual.norm();
        Ok(AdmissibilityReport {
            admissible: residual_norm <= self.admissibility_tol * ell_norm,
            z_component: z,
            u_component: u,
            residual_norm,
        })
    }

    /// Solves the Euler equations for direction `ell`.
    pub fn solve_euler(&self, ell: &DVector<f64>) -> Result<Outcome<EulerSolution>> {
        let report = self.check_direction(ell)?;
        if !report.admissible {
            return Ok(Outcome::Infinite(report));
        }
        let p_hat = self.normal().solve(ell);
        let z_hat = &self.l * &p_hat * self.wf();
        let u_hat = &self.h * &p_hat * self.weta();
        let sigma = ell.dot(&p_hat).max(0.0).sqrt();
        Ok(Outcome::Finite(EulerSolution {
            p_hat,
            z_hat,
            u_hat,
            c_hat: 0.0,
            sigma,
        }))
    }

    /// Guaranteed mean-squared error of the linear estimate `(u, y)`:
    /// `r_eta^2 |u|^2 + r_f^2 min{|z|^2 : L* z = ell - H* u}`, or infinity.
    pub fn apriori_value(&self, ell: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        check_dim("direction", self.n(), ell.len())?;
        check_dim("observation weights", self.h.nrows(), u.len())?;
        let hu = self.h.tr_mul(u);
        let target = ell - &hu;
        let scale = ell.norm() + hu.norm();
        let support = min_norm_support(&self.l, &target, self.radius_f, scale, self.admissibility_tol)?;
        if support.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok(self.radius_eta.powi(2) * u.norm_squared() + support * support)
    }

    fn solve_aposteriori(&self, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        check_dim("observation", self.h.nrows(), y.len())?;
        let phi_hat = self.normal().solve(&(self.h.tr_mul(y) * self.weta()));
        let q_hat = &self.l * &phi_hat * self.wf();
        let consistency = y.dot(&(y - &self.h * &phi_hat)) * self.weta();
        Ok((phi_hat, q_hat, consistency))
    }

    /// Centre of the a posteriori set and its half-widths along `directions`.
    pub fn aposteriori_estimate(
        &self,
        y: &DVector<f64>,
        directions: &[DVector<f64>],
    ) -> Result<AposterioriResult> {
        let (phi_hat, q_hat, consistency) = self.solve_aposteriori(y)?;
        if !self.has_unit_radii() {
            return Ok(AposterioriResult {
                phi_hat,
                q_hat,
                consistency,
                factor: None,
                radius: Vec::new(),
            });
        }
        if consistency > 1.0 {
            return Err(Error::EmptyAposterioriSet { consistency });
        }
        let factor = (1.0 - consistency).max(0.0).sqrt();
        let radius = directions
            .iter()
            .map(|ell| {
                Ok(match self.solve_euler(ell)? {
                    Outcome::Finite(sol) => factor * sol.sigma,
                    Outcome::Infinite(_) => f64::INFINITY,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AposterioriResult {
            phi_hat,
            q_hat,
            consistency,
            factor: Some(factor),
            radius,
        })
    }

    /// `(-c(X_y, -ell), c(X_y, ell))`: the range of `(ell, phi)` over the
    /// a posteriori set.
    pub fn support_aposteriori(&self, y: &DVector<f64>, ell: &DVector<f64>) -> Result<(f64, f64)> {
        if !self.has_unit_radii() {
            return Err(Error::InvalidParameter(
                "a posteriori support requires unit radii".into(),
            ));
        }
        let result = self.aposteriori_estimate(y, std::slice::from_ref(ell))?;
        let half_width = result.radius[0];
        if half_width.is_infinite() {
            let report = self.check_direction(ell)?;
            return Err(Error::InadmissibleDirection {
                residual: report.residual_norm,
            });
        }
        let centre = ell.dot(&result.phi_hat);
        Ok((centre - half_width, centre + half_width))
    }

    /// Direction of largest a priori error, by inverse power iteration on
    /// the weighted normal matrix.
    pub fn worst_direction(&self) -> Result<Outcome<WorstDirection>> {
        const MAX_ITER: usize = 10_000;
        const REL_TOL: f64 = 1e-15;

        if let Some(null) = self.normal().null_vector() {
            return Ok(Outcome::Infinite(self.check_direction(&null)?));
        }
        let n = self.n();
        let chol = self
            .normal_matrix()
            .cholesky()
            .ok_or_else(|| Error::InternalConsistency("normal matrix lost definiteness".into()))?;
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i + 1) as f64 * 1.618).sin());
        v /= v.norm();
        let mut lambda = 0.0;
        let mut iterations = 0;
        while iterations < MAX_ITER {
            iterations += 1;
            let w = chol.solve(&v);
            let next = v.dot(&w);
            v = &w / w.norm();
            let done = (next - lambda).abs() <= REL_TOL * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        // Final Rayleigh quotient on the normalized iterate.
        lambda = v.dot(&chol.solve(&v)).max(lambda);
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        Ok(Outcome::Finite(WorstDirection {
            ell_star: v,
            sigma_max: lambda.sqrt(),
            iterations,
        }))
    }
}

/// `radius * min{|z| : L* z = u}`, infinite when `u` is outside `R(L*)`.
///
/// In finite dimensions the domain of the closed support function is
/// exactly `R(L*)`.
pub fn support_min_norm(l: &DMatrix<f64>, u: &DVector<f64>, radius: f64) -> Result<f64> {
    check_dim("support argument", l.ncols(), u.len())?;
    positive("radius", radius)?;
    min_norm_support(l, u, radius, u.norm(), DEFAULT_ADMISSIBILITY_TOL)
}

fn min_norm_support(l: &DMatrix<f64>, u: &DVector<f64>, radius: f64, scale: f64, tol: f64) -> Result<f64> {
    if u.norm() == 0.0 {
        return Ok(0.0);
    }
    let lt = l.transpose();
    let z = MinNormLeastSquares::new(&lt, DEFAULT_EIGEN_CUTOFF.sqrt())?.solve(u);
    Ok(if (&lt * &z - u).norm() > tol * scale {
        f64::INFINITY
    } else {
        radius * z.norm()
    })
}
