//! Seeded instance generators and independent reference computations.
#![allow(dead_code)]

use minimax_core::linalg::thin_svd;
use minimax_core::{CanonicalDescriptor, EstimationProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random orthogonal matrix (Q factor of a random square matrix).
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform_matrix(rng, n, n).qr().q()
}

/// A seeded `(L, H)` pair whose common null space contains an orthonormal
/// basis of dimension `common_null`, returned as columns of the second
/// component. `l_rank` limits the rank of `L` alone.
pub struct PlantedProblem {
    pub problem: EstimationProblem,
    pub null_basis: DMatrix<f64>,
}

pub fn planted_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    k: usize,
    common_null: usize,
    l_rank: usize,
) -> PlantedProblem {
    let q = orthogonal(rng, n);
    let null_basis = q.columns(0, common_null).into_owned();
    let range = q.columns(common_null, n - common_null).into_owned();
    let inner = n - common_null;
    let l_core = uniform_matrix(rng, m, l_rank.min(inner)) * uniform_matrix(rng, l_rank.min(inner), inner);
    let h_core = uniform_matrix(rng, k, inner);
    let l = l_core * range.transpose();
    let h = h_core * range.transpose();
    PlantedProblem {
        problem: EstimationProblem::new(l, h).unwrap(),
        null_basis,
    }
}

/// `M^+ ell` computed as `G^+ (G^+)^T ell` with `G = [L; H]`, via the SVD
/// pseudo-inverse of the stacked matrix.
pub fn pinv_normal_solve(problem: &EstimationProblem, ell: &DVector<f64>) -> DVector<f64> {
    let gp = pseudo_inverse(&stacked(problem), 1e-10);
    &gp * (gp.transpose() * ell)
}

/// SVD pseudo-inverse with a relative singular-value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let svd = thin_svd(a).unwrap();
    let cut = rel_cutoff * svd.singular_values.max();
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += svd.v_t.row(i).transpose() * svd.u.column(i).transpose() / s;
        }
    }
    out
}

pub fn stacked(problem: &EstimationProblem) -> DMatrix<f64> {
    let (l, h) = (problem.l(), problem.h());
    let mut g = DMatrix::zeros(l.nrows() + h.nrows(), problem.n());
    g.rows_mut(0, l.nrows()).copy_from(l);
    g.rows_mut(l.nrows(), h.nrows()).copy_from(h);
    g
}

/// `min_phi |L phi|^2 + |y - H phi|^2` by least squares on `[L; H] phi ~ [0; y]`.
pub fn quadratic_minimum(problem: &EstimationProblem, y: &DVector<f64>) -> f64 {
    let g = stacked(problem);
    let m = problem.l().nrows();
    let mut rhs = DVector::zeros(g.nrows());
    rhs.rows_mut(m, y.len()).copy_from(y);
    let phi = pseudo_inverse(&g, 1e-12) * &rhs;
    (g * phi - rhs).norm_squared()
}

/// Random index-1 canonical system: `C4` is shifted towards `2 I`.
pub fn index_one_system(rng: &mut ChaCha8Rng, n: usize, r: usize, t_end: f64) -> CanonicalDescriptor {
    let mut c = uniform_matrix(rng, n, n) * 0.8;
    for i in r..n {
        c[(i, i)] += 2.0;
    }
    CanonicalDescriptor::from_blocks(r, c, 0.0, t_end).unwrap()
}
