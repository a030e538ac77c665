//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Relative asymmetry accepted before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Off-diagonal Frobenius mass (relative to `‖P‖_F`) that counts as diagonal.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;
/// Default clamp for tiny negative eigenvalues of PSD input, relative to `λ₁`.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-12;

/// `P = U diag(λ) Uᵀ` with `λ` sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigFactorization {
    pub eigvecs: Matrix,
    pub eigvals: Vec<f64>,
}

impl EigFactorization {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// `U f(Λ) Uᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mapped: Vec<f64> = self.eigvals.iter().map(|&l| f(l)).collect();
        self.eigvecs
            .scale_columns(&mapped)
            .matmul_t(&self.eigvecs)
            .symmetrized()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }

    pub fn largest(&self) -> f64 {
        self.eigvals.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.eigvals.last().copied().unwrap_or(0.0)
    }
}

/// Eigendecomposition of a symmetric (PSD) matrix.
///
/// The input is symmetrized as `(P + Pᵀ)/2`. Rotations are applied while an
/// off-diagonal entry exceeds machine precision relative to its diagonal
/// pair, which keeps small eigenvalues accurate relative to themselves.
/// Negative eigenvalues with magnitude below `tol·λ₁` are clamped to zero.
pub fn sym_eig(p: &Matrix, tol: f64) -> Result<EigFactorization> {
    const OP: &str = "sym_eig";
    p.ensure_square(OP)?;
    p.ensure_finite(OP)?;
    let asym = p.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric {
            op: OP,
            asymmetry: asym,
        });
    }
    let n = p.rows();
    let mut a = p.symmetrized();
    let mut v = Matrix::identity(n);
    let threshold = OFF_DIAGONAL_TOL * p.frobenius_norm();

    let mut converged = n <= 1;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let aij = a[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let (aii, ajj) = (a[(i, i)], a[(j, j)]);
                if aij.abs() <= f64::EPSILON * (aii * ajj).abs().sqrt()
                    || aij.abs() < f64::MIN_POSITIVE
                {
                    a[(i, j)] = 0.0;
                    a[(j, i)] = 0.0;
                    continue;
                }
                rotate(&mut a, &mut v, i, j);
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::Convergence {
            op: OP,
            iteration: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower index first among equal eigenvalues.
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let mut eigvals: Vec<f64> = order.iter().map(|&k| a[(k, k)]).collect();
    let mut eigvecs = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_sign(&mut col);
        eigvecs.set_column(dst, &col);
    }

    let top = eigvals.first().copied().unwrap_or(0.0);
    for l in eigvals.iter_mut() {
        if *l < 0.0 && l.abs() < tol * top {
            *l = 0.0;
        }
    }
    Ok(EigFactorization { eigvecs, eigvals })
}

/// Annihilates `a[(i, j)]` with one plane rotation and accumulates it into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, i: usize, j: usize) {
    let n = a.rows();
    let aij = a[(i, j)];
    let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * aij);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    a[(i, i)] -= t * aij;
    a[(j, j)] += t * aij;
    a[(i, j)] = 0.0;
    a[(j, i)] = 0.0;
    for r in 0..n {
        if r != i && r != j {
            let ari = a[(r, i)];
            let arj = a[(r, j)];
            let new_ri = c * ari - s * arj;
            let new_rj = s * ari + c * arj;
            a[(r, i)] = new_ri;
            a[(i, r)] = new_ri;
            a[(r, j)] = new_rj;
            a[(j, r)] = new_rj;
        }
        let vri = v[(r, i)];
        let vrj = v[(r, j)];
        v[(r, i)] = c * vri - s * vrj;
        v[(r, j)] = s * vri + c * vrj;
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Flips `v` so its largest-magnitude entry is positive (lowest index wins ties).
/// Returns whether a flip happened.
pub(crate) fn fix_sign(v: &mut [f64]) -> bool {
    let mut best = 0usize;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    #[test]
    fn identity_factorizes_trivially() {
        let e = sym_eig(&Matrix::identity(4), DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(e.eigvals, vec![1.0; 4]);
        assert_eq!(e.eigvecs, Matrix::identity(4));
    }

    #[test]
    fn diagonal_is_sorted() {
        let e = sym_eig(&Matrix::from_diag(&[1.0, 4.0]), DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(e.eigvals, vec![4.0, 1.0]);
        // Columns are e₂, e₁ with positive dominant entries.
        assert_eq!(e.eigvecs, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn random_spd_reconstructs() {
        let mut rng = random::rng(11);
        let p = random::spd_matrix(&mut rng, 8, 0.1);
        let e = sym_eig(&p, DEFAULT_CLAMP_TOL).unwrap();
        assert!(e.reconstruct().rel_diff(&p) <= 1e-9);
        assert!(e.eigvecs.column_orthonormality_error() <= 1e-10);
        assert!(e.eigvals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn small_eigenvalues_keep_relative_accuracy() {
        let mut rng = random::rng(5);
        let p = random::spd_with_condition(&mut rng, 6, 1e10, 1.0);
        let e = sym_eig(&p, DEFAULT_CLAMP_TOL).unwrap();
        assert!((e.smallest() - 1e-10).abs() / 1e-10 < 1e-4, "{}", e.smallest());
    }

    #[test]
    fn rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig(&rect, 0.0), Err(Error::Dimension { .. })));
        let mut nan = Matrix::identity(2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(&nan, 0.0), Err(Error::NonFinite { .. })));
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(matches!(sym_eig(&asym, 0.0), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn clamps_tiny_negative_eigenvalues() {
        let p = Matrix::from_diag(&[1.0, -1e-14]);
        let e = sym_eig(&p, DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(e.eigvals, vec![1.0, 0.0]);
        let p = Matrix::from_diag(&[1.0, -1e-3]);
        let e = sym_eig(&p, DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(e.eigvals, vec![1.0, -1e-3]);
    }
}
