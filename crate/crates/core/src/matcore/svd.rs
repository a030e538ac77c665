//! Thin SVD by one-sided (Hestenes) Jacobi orthogonalization.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

use super::eig::fix_sign;

const MAX_SWEEPS: usize = 80;

/// `G = left · diag(singvals) · rightᵀ` over the retained rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactorization {
    pub left: Matrix,
    pub singvals: Vec<f64>,
    pub right: Matrix,
}

impl SvdFactorization {
    pub fn rank(&self) -> usize {
        self.singvals.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.left.scale_columns(&self.singvals).matmul_t(&self.right)
    }

    /// `left · rightᵀ`, the partial isometry sharing this factorization's
    /// singular subspaces.
    pub fn polar_factor(&self) -> Matrix {
        self.left.matmul_t(&self.right)
    }
}

/// Thin SVD keeping the singular triplets with `sᵢ > tol·s₁`.
///
/// A zero matrix yields an empty factorization (rank 0).
pub fn svd(g: &Matrix, tol: f64) -> Result<SvdFactorization> {
    let full = jacobi_svd(g)?;
    let top = full.values.first().copied().unwrap_or(0.0);
    let rank = full
        .values
        .iter()
        .take_while(|&&s| s > tol * top && s > 0.0)
        .count();

    let (m, n) = g.shape();
    let mut left = Matrix::zeros(m, rank);
    let mut right = Matrix::zeros(n, rank);
    for k in 0..rank {
        let s = full.values[k];
        let mut u: Vec<f64> = full.left_scaled[k].iter().map(|x| x / s).collect();
        let mut v = full.right[k].clone();
        if fix_sign(&mut u) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        left.set_column(k, &u);
        right.set_column(k, &v);
    }
    Ok(SvdFactorization {
        left,
        singvals: full.values[..rank].to_vec(),
        right,
    })
}

/// All `min(m, n)` singular values, sorted non-increasing.
pub fn singular_values(g: &Matrix) -> Result<Vec<f64>> {
    Ok(jacobi_svd(g)?.values)
}

struct RawSvd {
    values: Vec<f64>,
    /// `σₖ uₖ` for each k, length m.
    left_scaled: Vec<Vec<f64>>,
    /// `vₖ`, length n.
    right: Vec<Vec<f64>>,
}

fn jacobi_svd(g: &Matrix) -> Result<RawSvd> {
    const OP: &str = "svd";
    g.ensure_finite(OP)?;
    let (m, n) = g.shape();
    // Orthogonalize the columns of whichever orientation is tall.
    let transposed = m < n;
    let a = if transposed { g.transpose() } else { g.clone() };
    let (rows, cols) = a.shape();

    let mut work: Vec<Vec<f64>> = (0..cols).map(|j| a.column(j)).collect();
    let mut basis: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON * (rows as f64).sqrt();

    let mut converged = cols <= 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence {
                op: OP,
                iteration: sweeps,
            });
        }
        sweeps += 1;
        converged = true;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = dot(&work[i], &work[i]);
                let beta = dot(&work[j], &work[j]);
                let gamma = dot(&work[i], &work[j]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, i, j, c, s);
                rotate_pair(&mut basis, i, j, c, s);
            }
        }
    }

    let norms: Vec<f64> = work.iter().map(|w| dot(w, w).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let values: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let work_sorted: Vec<Vec<f64>> = order.iter().map(|&k| work[k].clone()).collect();
    let basis_sorted: Vec<Vec<f64>> = order.iter().map(|&k| basis[k].clone()).collect();

    if !transposed {
        Ok(RawSvd {
            values,
            left_scaled: work_sorted,
            right: basis_sorted,
        })
    } else {
        // Gᵀ = W Σ Bᵀ, so G = B Σ Wᵀ: swap the roles and move σ to the left.
        let left_scaled = basis_sorted
            .iter()
            .zip(&values)
            .map(|(b, &s)| b.iter().map(|x| x * s).collect())
            .collect();
        let right = work_sorted
            .iter()
            .zip(&values)
            .map(|(w, &s)| {
                if s > 0.0 {
                    w.iter().map(|x| x / s).collect()
                } else {
                    w.clone()
                }
            })
            .collect();
        Ok(RawSvd {
            values,
            left_scaled,
            right,
        })
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(j);
    let (ci, cj) = (&mut head[i], &mut tail[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::eig::{sym_eig, DEFAULT_CLAMP_TOL};
    use crate::random;

    #[test]
    fn identity() {
        let f = svd(&Matrix::identity(3), 0.0).unwrap();
        assert_eq!(f.singvals, vec![1.0; 3]);
        assert_eq!(f.left, Matrix::identity(3));
        assert_eq!(f.right, Matrix::identity(3));
    }

    #[test]
    fn negative_diagonal_sign_goes_to_one_side() {
        let g = Matrix::from_diag(&[3.0, -2.0]);
        let f = svd(&g, 0.0).unwrap();
        assert_eq!(f.singvals, vec![3.0, 2.0]);
        // Oracle: singular values are square roots of eig(GᵀG).
        let e = sym_eig(&g.t_matmul(&g), DEFAULT_CLAMP_TOL).unwrap();
        for (s, l) in f.singvals.iter().zip(&e.eigvals) {
            assert!((s - l.sqrt()).abs() < 1e-14);
        }
        // Left vectors follow the sign convention; the flip lives in `right`.
        assert_eq!(f.left, Matrix::identity(2));
        assert_eq!(f.right, Matrix::from_diag(&[1.0, -1.0]));
        assert!(f.reconstruct().rel_diff(&g) < 1e-15);
    }

    #[test]
    fn random_square_reconstructs() {
        let mut rng = random::rng(3);
        let g = random::gaussian_matrix(&mut rng, 16, 16);
        let f = svd(&g, 0.0).unwrap();
        assert!(f.reconstruct().rel_diff(&g) <= 1e-9);
        assert!(f.left.column_orthonormality_error() <= 1e-10);
        assert!(f.right.column_orthonormality_error() <= 1e-10);
    }

    #[test]
    fn wide_and_tall_shapes() {
        let mut rng = random::rng(4);
        for (m, n) in [(3, 7), (7, 3), (1, 5), (5, 1)] {
            let g = random::gaussian_matrix(&mut rng, m, n);
            let f = svd(&g, 0.0).unwrap();
            assert_eq!(f.rank(), m.min(n));
            assert!(f.reconstruct().rel_diff(&g) <= 1e-12, "{m}x{n}");
            assert!(f.left.column_orthonormality_error() <= 1e-12);
            assert!(f.right.column_orthonormality_error() <= 1e-12);
        }
    }

    #[test]
    fn rank_truncation() {
        let mut rng = random::rng(8);
        let a = random::gaussian_matrix(&mut rng, 6, 2);
        let b = random::gaussian_matrix(&mut rng, 2, 5);
        let g = a.matmul(&b);
        let f = svd(&g, 1e-10).unwrap();
        assert_eq!(f.rank(), 2);
        assert!(f.reconstruct().rel_diff(&g) <= 1e-12);
        assert_eq!(svd(&Matrix::zeros(3, 3), 1e-10).unwrap().rank(), 0);
    }

    #[test]
    fn rejects_non_finite() {
        let mut g = Matrix::identity(2);
        g[(1, 1)] = f64::INFINITY;
        assert!(matches!(svd(&g, 0.0), Err(Error::NonFinite { .. })));
    }
}
