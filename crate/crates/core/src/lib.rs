//! Differentiable SVD meta-layer with covariance-conditioning treatments.
//!
//! The crate is organized bottom-up:
//!
//! - [`matcore`]: dense kernels (Jacobi eigendecomposition and SVD, matrix
//!   exponential, square roots, Newton–Schulz, condition numbers).
//! - [`svdlayer`]: covariance, matrix square root / inverse square root
//!   forward and backward passes, whitening and covariance pooling.
//! - [`ortho`]: spectral normalization, orthogonality loss, orthogonal
//!   weights, nearest orthogonal gradient and the optimal learning rate.
//! - [`trainer`]: a small synthetic classification harness that records the
//!   conditioning of the SVD-layer input covariance at every step.
//! - [`directions`]: closed-form latent directions from a projection or a
//!   Jacobian.

pub mod config;
pub mod csvio;
pub mod directions;
pub mod error;
pub mod matcore;
pub mod matrix;
pub mod ortho;
pub mod random;
pub mod svdlayer;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
