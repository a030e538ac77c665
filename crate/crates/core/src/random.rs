//! Seeded generators for test matrices. Everything goes through
//! `ChaCha8Rng` so runs are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::{dot, Matrix};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
pub fn orthogonal_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    orthonormalize_columns(&g)
}

/// Matrix with orthonormal columns (`rows ≥ cols`), Haar on the Stiefel manifold.
pub fn stiefel_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    assert!(rows >= cols);
    let g = gaussian_matrix(rng, rows, cols);
    orthonormalize_columns(&g)
}

/// Gram–Schmidt with one re-orthogonalization pass. Columns of `a` must be
/// linearly independent. Equivalent to the Q factor of a QR with positive
/// diagonal R.
pub fn orthonormalize_columns(a: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = a.column(j);
        for _ in 0..2 {
            for q in &cols {
                let proj = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        assert!(norm > 0.0, "orthonormalize_columns: dependent columns");
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let mut q = Matrix::zeros(m, n);
    for (j, c) in cols.iter().enumerate() {
        q.set_column(j, c);
    }
    q
}

/// Symmetric positive definite matrix `Q diag(λ) Qᵀ` with eigenvalues
/// log-spaced from `top` down to `top / cond`.
pub fn spd_with_condition(rng: &mut impl Rng, n: usize, cond: f64, top: f64) -> Matrix {
    let eig: Vec<f64> = (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            top * cond.powf(-t)
        })
        .collect();
    let q = orthogonal_matrix(rng, n);
    q.scale_columns(&eig).matmul_t(&q).symmetrized()
}

/// Random SPD matrix `GGᵀ/n + shift·I`.
pub fn spd_matrix(rng: &mut impl Rng, n: usize, shift: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    let mut p = g.matmul_t(&g).scale(1.0 / n as f64);
    for i in 0..n {
        p[(i, i)] += shift;
    }
    p.symmetrized()
}

pub fn skew_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    (&g - &g.transpose()).scale(scale)
}

/// Uniformly distributed unit vector.
pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_matrix_is_orthogonal() {
        let mut r = rng(1);
        for n in [1, 3, 16, 64] {
            let q = orthogonal_matrix(&mut r, n);
            assert!(q.orthogonality_error() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = gaussian_matrix(&mut rng(9), 4, 5);
        let b = gaussian_matrix(&mut rng(9), 4, 5);
        assert_eq!(a, b);
    }
}
