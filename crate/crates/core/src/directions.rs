//! Closed-form latent directions.
//!
//! For a projector `A`, the unit `n` maximizing `‖A n‖²` is the top
//! eigenvector of `AᵀA`; for a generator, the same holds for its Jacobian at
//! a latent point. The spectrum tells how unequal the directions are.

use crate::error::{Error, Result};
use crate::matcore::{singular_values, sym_eig, DEFAULT_CLAMP_TOL};
use crate::matrix::Matrix;

/// Number of directions requested when the caller does not say.
pub const DEFAULT_K: usize = 6;
/// Relative spread below which a spectrum counts as flat.
pub const FLAT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    /// `n × k`, one unit direction per column.
    pub vectors: Matrix,
    /// Eigenvalues of `AᵀA` matching the columns, non-increasing.
    pub spectrum: Vec<f64>,
    /// All eigenvalues of `AᵀA` coincide; the columns are then the leading
    /// canonical basis vectors.
    pub flat: bool,
}

impl Directions {
    /// Columns as CSV with a `d1,d2,...` header.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.vectors.cols()).map(|i| format!("d{i}")).collect();
        crate::csvio::write_matrix(&self.vectors, Some(&header))
    }
}

/// Top-`k` eigenvectors of `AᵀA` and their eigenvalues.
pub fn weight_directions(a: &Matrix, k: usize) -> Result<Directions> {
    let n = a.cols();
    if k == 0 || k > n {
        return Err(Error::Size(format!("k = {k} outside 1..={n}")));
    }
    a.ensure_finite("weight_directions")?;
    let eig = sym_eig(&a.t_matmul(a), DEFAULT_CLAMP_TOL)?;
    let top = eig.largest();
    let flat = top > 0.0 && (top - eig.smallest()) <= FLAT_TOL * top;
    let vectors = if flat {
        Matrix::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 })
    } else {
        eig.eigvecs.block(0, 0, n, k)
    };
    let spectrum = if flat {
        vec![top; k]
    } else {
        eig.eigvals[..k].to_vec()
    };
    Ok(Directions {
        vectors,
        spectrum,
        flat,
    })
}

/// Central-difference Jacobian of `generator` at `z0` with step `h`.
pub fn jacobian<F>(generator: F, z0: &[f64], h: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Config(format!("step h = {h} outside [1e-6, 1e-3]")));
    }
    let eval = |z: &[f64]| -> Result<Vec<f64>> {
        let out = generator(z);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite { op: "jacobian" })
        }
    };
    let m = eval(z0)?.len();
    let mut jac = Matrix::zeros(m, z0.len());
    let mut z = z0.to_vec();
    for j in 0..z0.len() {
        z[j] = z0[j] + h;
        let plus = eval(&z)?;
        z[j] = z0[j] - h;
        let minus = eval(&z)?;
        z[j] = z0[j];
        if plus.len() != m || minus.len() != m {
            return Err(Error::Dimension {
                op: "jacobian",
                detail: "generator output length varies".into(),
            });
        }
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// [`weight_directions`] on the Jacobian of `generator` at `z0`.
pub fn jacobian_directions<F>(generator: F, z0: &[f64], k: usize, h: f64) -> Result<Directions>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    weight_directions(&jacobian(generator, z0, h)?, k)
}

/// `σ_min / σ_max ∈ [0, 1]`; 1 exactly for scaled orthogonal matrices.
pub fn spectrum_flatness(a: &Matrix) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&top), Some(&bottom)) if top > 0.0 => Ok(bottom / top),
        _ => Err(Error::Degenerate {
            op: "spectrum_flatness",
            detail: "zero matrix has no spectrum".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_projector() {
        let a = Matrix::from_diag(&[3.0, 1.0]);
        let d = weight_directions(&a, 1).unwrap();
        assert_eq!(d.vectors.column(0), vec![1.0, 0.0]);
        assert!((d.spectrum[0] - 9.0).abs() < 1e-12);
        let d = weight_directions(&a, 2).unwrap();
        assert!((d.spectrum[1] - 1.0).abs() < 1e-12);
        assert!(!d.flat);
    }

    #[test]
    fn flat_spectrum_gives_canonical_basis() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let a = Matrix::from_rows(&[vec![c, -c], vec![c, c]]);
        let d = weight_directions(&a, 2).unwrap();
        assert!(d.flat);
        assert_eq!(d.vectors, Matrix::identity(2));
    }

    #[test]
    fn k_out_of_range() {
        let a = Matrix::identity(3);
        assert!(matches!(weight_directions(&a, 0), Err(Error::Size(_))));
        assert!(matches!(weight_directions(&a, 4), Err(Error::Size(_))));
    }

    #[test]
    fn flatness_values() {
        assert_eq!(spectrum_flatness(&Matrix::identity(3)).unwrap(), 1.0);
        let f = spectrum_flatness(&Matrix::from_diag(&[2.75, 1.0])).unwrap();
        assert!((f - 1.0 / 2.75).abs() < 1e-15);
        assert!(matches!(
            spectrum_flatness(&Matrix::zeros(2, 2)),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn jacobian_of_square_map() {
        let g = |z: &[f64]| z.iter().map(|v| v * v).collect::<Vec<_>>();
        let d = jacobian_directions(g, &[1.0; 4], 4, 1e-4).unwrap();
        assert!(d.flat);
        assert!(d.spectrum.iter().all(|&s| (s - 4.0).abs() < 1e-8));
    }

    #[test]
    fn jacobian_rejects_bad_step_and_nan() {
        let g = |z: &[f64]| z.to_vec();
        assert!(matches!(jacobian(g, &[0.0], 1e-2), Err(Error::Config(_))));
        let bad = |_: &[f64]| vec![f64::NAN];
        assert!(matches!(jacobian(bad, &[0.0], 1e-4), Err(Error::NonFinite { .. })));
    }
}
