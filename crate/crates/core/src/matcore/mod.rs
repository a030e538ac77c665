//! Deterministic dense kernels: symmetric eigendecomposition, SVD, matrix
//! exponential, square roots and condition numbers.

mod eig;
mod expm;
mod spectral;
mod svd;

pub use eig::{sym_eig, EigFactorization, DEFAULT_CLAMP_TOL, MAX_SWEEPS, OFF_DIAGONAL_TOL, SYMMETRY_TOL};
pub use expm::{expm, expm_frechet};
pub use spectral::{
    cond_number, condition_from_spectrum, mat_invsqrt, mat_sqrt, newton_schulz, Floor,
};
pub use svd::{singular_values, svd, SvdFactorization};
