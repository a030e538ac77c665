//! Spectral matrix functions: condition number, square root, inverse square
//! root, and the Newton–Schulz iteration.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::eig::{sym_eig, EigFactorization, DEFAULT_CLAMP_TOL, SYMMETRY_TOL};
use super::svd::singular_values;

/// `λ_max / λ_min` of a non-increasing spectrum, `+∞` when the smallest
/// entry is zero (or negative after clamping).
pub fn condition_from_spectrum(spectrum: &[f64]) -> f64 {
    match (spectrum.first(), spectrum.last()) {
        (Some(&top), Some(&bottom)) if bottom > 0.0 => top / bottom,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// `κ(A) = σ_max / σ_min`, or `+∞` when `σ_min = 0`.
///
/// Symmetric PSD input goes through `sym_eig`, which resolves small
/// eigenvalues to relative accuracy; everything else through the SVD.
pub fn cond_number(a: &Matrix) -> Result<f64> {
    a.ensure_square("cond_number")?;
    a.ensure_finite("cond_number")?;
    if a.asymmetry() <= SYMMETRY_TOL {
        let eig = sym_eig(a, DEFAULT_CLAMP_TOL)?;
        if eig.smallest() >= 0.0 {
            return Ok(condition_from_spectrum(&eig.eigvals));
        }
    }
    Ok(condition_from_spectrum(&singular_values(a)?))
}

fn ensure_psd(eig: &EigFactorization, op: &'static str) -> Result<()> {
    match eig.eigvals.iter().find(|&&l| l < 0.0) {
        Some(&value) => Err(Error::Domain { op, value }),
        None => Ok(()),
    }
}

/// `P^{1/2} = U Λ^{1/2} Uᵀ`.
pub fn mat_sqrt(p: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(p, DEFAULT_CLAMP_TOL)?;
    ensure_psd(&eig, "mat_sqrt")?;
    Ok(eig.reconstruct_with(f64::sqrt))
}

/// Eigenvalue floor applied before inverting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Floor {
    /// Floor at `factor · λ₁`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Floor {
    fn default() -> Self {
        Floor::Relative(1e-12)
    }
}

impl Floor {
    pub fn value(self, largest: f64) -> f64 {
        match self {
            Floor::Relative(f) => f * largest,
            Floor::Absolute(v) => v,
        }
    }
}

/// Applies `floor` to a factorization in place. Fails when nothing survives
/// the floor.
fn floor_spectrum(eig: &mut EigFactorization, floor: Floor, op: &'static str) -> Result<()> {
    ensure_psd(eig, op)?;
    let largest = eig.largest();
    let f = floor.value(largest);
    if largest <= 0.0 || largest < f {
        return Err(Error::Rank {
            op,
            largest,
            floor: f,
        });
    }
    for l in eig.eigvals.iter_mut() {
        if *l < f {
            *l = f;
        }
    }
    Ok(())
}

/// `P^{-1/2} = U Λ^{-1/2} Uᵀ` with eigenvalues floored first.
pub fn mat_invsqrt(p: &Matrix, floor: Floor) -> Result<Matrix> {
    let mut eig = sym_eig(p, DEFAULT_CLAMP_TOL)?;
    floor_spectrum(&mut eig, floor, "mat_invsqrt")?;
    Ok(eig.reconstruct_with(|l| 1.0 / l.sqrt()))
}

/// Coupled Newton–Schulz iteration for `(A^{1/2}, A^{-1/2})`.
///
/// `A` is divided by its trace before iterating and the results are
/// rescaled afterwards. Convergence slows as the normalized smallest
/// eigenvalue shrinks: each early iteration only grows it by about 9/4.
pub fn newton_schulz(a: &Matrix, iters: usize) -> Result<(Matrix, Matrix)> {
    const OP: &str = "newton_schulz";
    a.ensure_square(OP)?;
    a.ensure_finite(OP)?;
    if iters == 0 {
        return Err(Error::Size("newton_schulz needs at least one iteration".into()));
    }
    let n = a.rows();
    let trace = a.trace();
    if trace <= 0.0 {
        return Err(Error::Rank {
            op: OP,
            largest: trace,
            floor: 0.0,
        });
    }
    let three_i = Matrix::identity(n).scale(3.0);
    let mut y = a.scale(1.0 / trace);
    let mut z = Matrix::identity(n);
    for k in 1..=iters {
        let t = (&three_i - &z.matmul(&y)).scale(0.5);
        y = y.matmul(&t);
        z = t.matmul(&z);
        if !(y.is_finite() && z.is_finite()) {
            return Err(Error::Convergence { op: OP, iteration: k });
        }
    }
    let root = trace.sqrt();
    Ok((y.scale(root), z.scale(1.0 / root)))
}
