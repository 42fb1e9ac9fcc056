//! Dense helpers shared by the estimators: an SVD, a symmetric
//! pseudo-inverse, a minimum-norm least-squares solver and a
//! block-tridiagonal LU.

use nalgebra::{DMatrix, DVector, LU, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues at or below `cutoff * lambda_max` are treated as zero.
pub const DEFAULT_EIGEN_CUTOFF: f64 = 1e-12;

/// Pseudo-inverse of a symmetric positive semidefinite matrix through its
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct SymmetricPseudoInverse {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    threshold: f64,
}

impl SymmetricPseudoInverse {
    pub fn new(matrix: &DMatrix<f64>, relative_cutoff: f64) -> Self {
        let sym = (matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            threshold: relative_cutoff * lambda_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn kept(&self, i: usize) -> bool {
        self.eigenvalues[i] > self.threshold && self.eigenvalues[i] > 0.0
    }

    pub fn rank(&self) -> usize {
        (0..self.dim()).filter(|&i| self.kept(i)).count()
    }

    /// Minimum-norm solution of `M x = b` restricted to the retained
    /// eigenspace.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.eigenvectors.tr_mul(b);
        let mut x = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            if self.kept(i) {
                x.axpy(coeffs[i] / self.eigenvalues[i], &self.eigenvectors.column(i), 1.0);
            }
        }
        x
    }

    /// Orthogonal projection onto the retained eigenspace (the range of `M`).
    pub fn project(&self, b: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.eigenvectors.tr_mul(b);
        let mut x = DVector::zeros(self.dim());
        for i in (0..self.dim()).filter(|&i| self.kept(i)) {
            x.axpy(coeffs[i], &self.eigenvectors.column(i), 1.0);
        }
        x
    }

    /// A unit vector from the discarded eigenspace, if any.
    pub fn null_vector(&self) -> Option<DVector<f64>> {
        (0..self.dim())
            .filter(|&i| !self.kept(i))
            .min_by(|&a, &b| self.eigenvalues[a].total_cmp(&self.eigenvalues[b]))
            .map(|i| self.eigenvectors.column(i).into_owned())
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }
}

/// Thin SVD `A = U diag(s) V^T` with singular values in descending order.
///
/// Computed with `faer`: nalgebra's bidiagonal SVD occasionally returns
/// factors that do not reproduce rank-deficient inputs.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(ThinSvd {
            u: DMatrix::zeros(m, 0),
            singular_values: DVector::zeros(0),
            v_t: DMatrix::zeros(0, n),
        });
    }
    let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|e| Error::InternalConsistency(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    Ok(ThinSvd {
        u: DMatrix::from_fn(m, k, |i, j| u[(i, order[j])]),
        singular_values: DVector::from_fn(k, |j, _| s[order[j]]),
        v_t: DMatrix::from_fn(k, n, |i, j| v[(j, order[i])]),
    })
}

/// Minimum-norm least-squares solutions of `A x ~ b` via the SVD.
#[derive(Debug, Clone)]
pub struct MinNormLeastSquares {
    u: DMatrix<f64>,
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
    threshold: f64,
    ncols: usize,
}

impl MinNormLeastSquares {
    pub fn new(a: &DMatrix<f64>, relative_cutoff: f64) -> Result<Self> {
        let svd = thin_svd(a)?;
        let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
        Ok(Self {
            u: svd.u,
            singular_values: svd.singular_values,
            v_t: svd.v_t,
            threshold: relative_cutoff * sigma_max,
            ncols: a.ncols(),
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.ncols);
        for (i, &s) in self.singular_values.iter().enumerate() {
            if s > self.threshold && s > 0.0 {
                let c = self.u.column(i).dot(b) / s;
                x.axpy(c, &self.v_t.row(i).transpose(), 1.0);
            }
        }
        x
    }
}

/// Block-tridiagonal matrix with square blocks of equal size.
///
/// Row `k` holds `lower[k]` (coupling to unknown `k-1`), `diag[k]` and
/// `upper[k]` (coupling to unknown `k+1`). `lower[0]` and `upper[last]` are
/// ignored.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub lower: Vec<DMatrix<f64>>,
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

/// Block LU factorization (block Thomas algorithm) of a [`BlockTridiagonal`].
#[derive(Debug, Clone)]
pub struct BlockLu {
    pivots: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    lower: Vec<DMatrix<f64>>,
    /// `pivot[k]^{-1} * upper[k]`
    coupling: Vec<DMatrix<f64>>,
}

const PIVOT_TOL: f64 = 1e-13;

fn pivot_is_singular(pivot: &DMatrix<f64>, lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let scale = pivot.amax();
    if scale == 0.0 {
        return true;
    }
    let u = lu.u();
    (0..u.nrows()).any(|i| !(u[(i, i)].abs() > PIVOT_TOL * scale))
}

impl BlockTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn factor(&self) -> Result<BlockLu> {
        let nb = self.len();
        let mut pivots = Vec::with_capacity(nb);
        let mut coupling: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let pivot = if k == 0 {
                self.diag[0].clone()
            } else {
                &self.diag[k] - &self.lower[k] * &coupling[k - 1]
            };
            let lu = pivot.clone().lu();
            if pivot_is_singular(&pivot, &lu) {
                return Err(Error::SingularPivot { node: k });
            }
            if k + 1 < nb {
                let x = lu
                    .solve(&self.upper[k])
                    .ok_or(Error::SingularPivot { node: k })?;
                coupling.push(x);
            }
            pivots.push(lu);
        }
        Ok(BlockLu {
            pivots,
            lower: self.lower.clone(),
            coupling,
        })
    }
}

impl BlockLu {
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let nb = self.pivots.len();
        crate::error::check_dim("block right-hand side", nb, rhs.len())?;
        let mut g: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let b = if k == 0 {
                rhs[0].clone()
            } else {
                &rhs[k] - &self.lower[k] * &g[k - 1]
            };
            g.push(
                self.pivots[k]
                    .solve(&b)
                    .ok_or(Error::SingularPivot { node: k })?,
            );
        }
        for k in (0..nb.saturating_sub(1)).rev() {
            let next = g[k + 1].clone();
            g[k] -= &self.coupling[k] * next;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thin_svd_reproduces_rank_deficient_products() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let (m, n) = (rng.random_range(2..12usize), rng.random_range(2..12usize));
            let r = rng.random_range(1..=m.min(n));
            let a = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0))
                * DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
            let svd = thin_svd(&a).unwrap();
            let rec = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * &svd.v_t;
            assert!((rec - &a).amax() < 1e-12);
            assert!(svd.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
        assert_eq!(thin_svd(&DMatrix::zeros(0, 3)).unwrap().v_t.shape(), (0, 3));
    }

    #[test]
    fn pseudo_inverse_drops_null_space() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let pinv = SymmetricPseudoInverse::new(&m, DEFAULT_EIGEN_CUTOFF);
        assert_eq!(pinv.rank(), 2);
        let x = pinv.solve(&DVector::from_vec(vec![2.0, 3.0, 5.0]));
        assert!((x - DVector::from_vec(vec![1.0, 3.0, 0.0])).norm() < 1e-14);
        let null = pinv.null_vector().unwrap();
        assert!((null[2].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn min_norm_least_squares_on_wide_matrix() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = MinNormLeastSquares::new(&a, 1e-12).unwrap().solve(&DVector::from_vec(vec![2.0]));
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn block_thomas_matches_dense_solve() {
        let blocks = 5;
        let bs = 2;
        let entry = |k: usize, i: usize, j: usize, s: f64| ((k * 7 + i * 3 + j) as f64 * s).sin();
        let mk = |s: f64, shift: f64| {
            (0..blocks)
                .map(|k| {
                    DMatrix::from_fn(bs, bs, |i, j| {
                        entry(k, i, j, s) + if i == j { shift } else { 0.0 }
                    })
                })
                .collect::<Vec<_>>()
        };
        let sys = BlockTridiagonal {
            lower: mk(0.3, 0.0),
            diag: mk(0.7, 4.0),
            upper: mk(1.1, 0.0),
        };
        let rhs: Vec<_> = (0..blocks)
            .map(|k| DVector::from_fn(bs, |i, _| (k + i) as f64))
            .collect();
        let x = sys.factor().unwrap().solve(&rhs).unwrap();

        let n = blocks * bs;
        let mut dense = DMatrix::zeros(n, n);
        for k in 0..blocks {
            dense.view_mut((k * bs, k * bs), (bs, bs)).copy_from(&sys.diag[k]);
            if k > 0 {
                dense.view_mut((k * bs, (k - 1) * bs), (bs, bs)).copy_from(&sys.lower[k]);
            }
            if k + 1 < blocks {
                dense.view_mut((k * bs, (k + 1) * bs), (bs, bs)).copy_from(&sys.upper[k]);
            }
        }
        let b = DVector::from_iterator(n, rhs.iter().flat_map(|v| v.iter().copied()));
        let expected = dense.lu().solve(&b).unwrap();
        let got = DVector::from_iterator(n, x.iter().flat_map(|v| v.iter().copied()));
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn singular_pivot_is_reported_with_its_index() {
        let z = DMatrix::<f64>::zeros(1, 1);
        let i = DMatrix::<f64>::identity(1, 1);
        let sys = BlockTridiagonal {
            lower: vec![z.clone(), i.clone()],
            diag: vec![i.clone(), i.clone()],
            upper: vec![i.clone(), z],
        };
        assert_eq!(sys.factor().unwrap_err(), Error::SingularPivot { node: 1 });
    }
}
