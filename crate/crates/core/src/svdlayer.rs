//! The SVD meta-layer: covariance of a feature matrix, its square root or
//! inverse square root through an eigendecomposition, and the exact
//! backward pass through `U` and `Λ`.
//!
//! Shapes follow the feature-matrix convention `X ∈ R^{d×N}` (d channels,
//! N samples or spatial positions). Covariances always carry the `1/N`
//! factor so that condition numbers are comparable across heads.

use crate::error::{Error, Result};
use crate::matcore::{sym_eig, EigFactorization, Floor, DEFAULT_CLAMP_TOL};
use crate::matrix::Matrix;

/// Relative eigenvalue gap (w.r.t. `λ₁`) under which the unstabilized
/// backward pass refuses to divide.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMode {
    /// `Q = P^{1/2}`
    Sqrt,
    /// `S = P^{-1/2}`
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilizerScheme {
    None,
    /// `1/(λᵢ−λⱼ)` replaced by `(λᵢ−λⱼ)/((λᵢ−λⱼ)² + eps)`.
    SoftK,
}

/// How the `K` matrix of the backward pass is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradStabilizer {
    scheme: StabilizerScheme,
    /// Relative to `λ₁²`.
    eps: f64,
}

impl GradStabilizer {
    pub const DEFAULT_EPS: f64 = 1e-12;

    pub fn none() -> Self {
        Self {
            scheme: StabilizerScheme::None,
            eps: 0.0,
        }
    }

    /// Soft K with `eps = rel_eps · λ₁²`.
    pub fn soft_k(rel_eps: f64) -> Result<Self> {
        if !(rel_eps > 0.0 && rel_eps.is_finite()) {
            return Err(Error::Config(format!(
                "soft-K stabilizer needs a positive eps, got {rel_eps}"
            )));
        }
        Ok(Self {
            scheme: StabilizerScheme::SoftK,
            eps: rel_eps,
        })
    }

    pub fn scheme(&self) -> StabilizerScheme {
        self.scheme
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Off-diagonal entry `K_ij` for the eigenvalue pair `(i, j)`.
    fn k_entry(&self, lambdas: &[f64], i: usize, j: usize, top: f64) -> Result<f64> {
        let gap = lambdas[i] - lambdas[j];
        match self.scheme {
            StabilizerScheme::None => {
                if gap.abs() <= DEGENERACY_TOL * top.abs().max(f64::MIN_POSITIVE) {
                    Err(Error::DegenerateSpectrum { i, j, gap })
                } else {
                    Ok(1.0 / gap)
                }
            }
            StabilizerScheme::SoftK => {
                let eps = self.eps * top * top;
                let den = gap * gap + eps;
                Ok(if den > 0.0 { gap / den } else { 0.0 })
            }
        }
    }
}

impl Default for GradStabilizer {
    fn default() -> Self {
        Self {
            scheme: StabilizerScheme::SoftK,
            eps: Self::DEFAULT_EPS,
        }
    }
}

/// Everything the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// The feature matrix `X`, absent when the layer was fed `P` directly.
    pub input: Option<Matrix>,
    pub centered: bool,
    /// Eigendecomposition of `P` before flooring.
    pub factorization: EigFactorization,
    /// Eigenvalue floor applied to every power of `λ` in forward and backward.
    pub floor: f64,
    pub mode: RootMode,
    pub stabilizer: GradStabilizer,
}

impl LayerCache {
    fn floored_eigvals(&self) -> Vec<f64> {
        self.factorization
            .eigvals
            .iter()
            .map(|&l| l.max(self.floor))
            .collect()
    }

    /// Condition number of the covariance fed to the layer (before flooring).
    pub fn condition(&self) -> f64 {
        crate::matcore::condition_from_spectrum(&self.factorization.eigvals)
    }
}

/// Sample covariance `P = X J Xᵀ` with `J = (1/N)(I − 11ᵀ/N)` when
/// centering, `J = I/N` otherwise.
pub fn covariance(x: &Matrix, center: bool) -> Result<Matrix> {
    if x.cols() == 0 {
        return Err(Error::Size("covariance needs at least one sample".into()));
    }
    let xc = if center { center_rows(x) } else { x.clone() };
    Ok(xc.matmul_t(&xc).scale(1.0 / x.cols() as f64).symmetrized())
}

/// Subtracts each row's mean: `X (I − 11ᵀ/N)`.
pub fn center_rows(x: &Matrix) -> Matrix {
    let n = x.cols() as f64;
    let mut out = x.clone();
    for i in 0..x.rows() {
        let mean = x.row(i).iter().sum::<f64>() / n;
        for j in 0..x.cols() {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// Matrix square root / inverse square root layer.
#[derive(Debug, Clone, Copy)]
pub struct SvdLayer {
    pub mode: RootMode,
    pub stabilizer: GradStabilizer,
    pub floor: Floor,
}

impl SvdLayer {
    pub fn new(mode: RootMode, stabilizer: GradStabilizer) -> Self {
        Self {
            mode,
            stabilizer,
            floor: Floor::default(),
        }
    }

    /// Forward pass on a covariance `P`.
    pub fn forward(&self, p: &Matrix) -> Result<(Matrix, LayerCache)> {
        let factorization = sym_eig(p, DEFAULT_CLAMP_TOL)?;
        self.finish(factorization, None, false)
    }

    /// Forward pass on features: forms `P = XJXᵀ` and keeps `X` for backward.
    pub fn forward_features(&self, x: &Matrix, center: bool) -> Result<(Matrix, LayerCache)> {
        self.forward_features_jittered(x, center, 0.0)
    }

    /// As [`forward_features`](Self::forward_features) with `jitter·I` added to
    /// `P`. The jitter is a constant, so the backward pass is unchanged.
    pub fn forward_features_jittered(
        &self,
        x: &Matrix,
        center: bool,
        jitter: f64,
    ) -> Result<(Matrix, LayerCache)> {
        let mut p = covariance(x, center)?;
        if jitter != 0.0 {
            for i in 0..p.rows() {
                p[(i, i)] += jitter;
            }
        }
        let factorization = sym_eig(&p, DEFAULT_CLAMP_TOL)?;
        self.finish(factorization, Some(x.clone()), center)
    }

    fn finish(
        &self,
        factorization: EigFactorization,
        input: Option<Matrix>,
        centered: bool,
    ) -> Result<(Matrix, LayerCache)> {
        if let Some(&value) = factorization.eigvals.iter().find(|&&l| l < 0.0) {
            return Err(Error::Domain {
                op: "SvdLayer::forward",
                value,
            });
        }
        let largest = factorization.largest();
        let floor = self.floor.value(largest);
        let out = match self.mode {
            RootMode::Sqrt => factorization.reconstruct_with(f64::sqrt),
            RootMode::InvSqrt => {
                if largest <= 0.0 || largest < floor {
                    return Err(Error::Rank {
                        op: "SvdLayer::forward",
                        largest,
                        floor,
                    });
                }
                factorization.reconstruct_with(|l| 1.0 / l.max(floor).sqrt())
            }
        };
        let cache = LayerCache {
            input,
            centered,
            factorization,
            floor,
            mode: self.mode,
            stabilizer: self.stabilizer,
        };
        Ok((out, cache))
    }
}

/// `∂l/∂P` from `∂l/∂Q` (or `∂l/∂S`), returned in symmetric form.
///
/// Follows the eigenvector / eigenvalue route: `∂l/∂U = (G + Gᵀ) U f(Λ)`,
/// `∂l/∂Λ = f'(Λ) diag(Uᵀ G U)`, then `U (Kᵀ ∘ Uᵀ ∂l/∂U + (∂l/∂Λ)_diag) Uᵀ`.
/// The result is symmetrized; only its symmetric part acts on a symmetric
/// perturbation of `P`, and the feature gradient depends on nothing else.
pub fn backward_cov(grad_out: &Matrix, cache: &LayerCache) -> Result<Matrix> {
    let u = &cache.factorization.eigvecs;
    let d = u.rows();
    if grad_out.shape() != (d, d) {
        return Err(Error::Dimension {
            op: "svdlayer::backward",
            detail: format!("gradient is {:?}, layer output is {d}x{d}", grad_out.shape()),
        });
    }
    grad_out.ensure_finite("svdlayer::backward")?;
    let lam = cache.floored_eigvals();
    let (f, f_prime): (Vec<f64>, Vec<f64>) = match cache.mode {
        RootMode::Sqrt => lam
            .iter()
            .map(|&l| (l.sqrt(), 0.5 / l.sqrt()))
            .unzip(),
        RootMode::InvSqrt => lam
            .iter()
            .map(|&l| (1.0 / l.sqrt(), -0.5 * l.powf(-1.5)))
            .unzip(),
    };

    let g_sym2 = grad_out + &grad_out.transpose();
    let grad_u = g_sym2.matmul(u).scale_columns(&f);
    let ut_grad_u = u.t_matmul(&grad_u);
    let ut_g_u = u.t_matmul(&grad_out.matmul(u));

    let top = lam.first().copied().unwrap_or(0.0);
    let mut inner = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            inner[(i, j)] = if i == j {
                f_prime[i] * ut_g_u[(i, i)]
            } else {
                // (Kᵀ)_ij = K_ji = 1/(λ_j − λ_i)
                cache.stabilizer.k_entry(&lam, j, i, top)? * ut_grad_u[(i, j)]
            };
        }
    }
    Ok(u.matmul(&inner).matmul_t(u).symmetrized())
}

/// `∂l/∂X = (∂l/∂P + (∂l/∂P)ᵀ) X J`.
pub fn backward(grad_out: &Matrix, cache: &LayerCache) -> Result<Matrix> {
    let x = cache.input.as_ref().ok_or_else(|| Error::Dimension {
        op: "svdlayer::backward",
        detail: "layer was run on a covariance, not on features".into(),
    })?;
    let grad_p = backward_cov(grad_out, cache)?;
    Ok(feature_grad(&grad_p, x, cache.centered))
}

fn feature_grad(grad_p: &Matrix, x: &Matrix, centered: bool) -> Matrix {
    let xj = if centered { center_rows(x) } else { x.clone() }.scale(1.0 / x.cols() as f64);
    (grad_p + &grad_p.transpose()).matmul(&xj)
}

/// Output and cache of [`whiten`].
#[derive(Debug, Clone)]
pub struct WhitenCache {
    pub layer: LayerCache,
    /// `P^{-1/2}`
    pub whitening: Matrix,
}

/// ZCA whitening `(XXᵀ/N)^{-1/2} X`, with rows centered first when `center`.
pub fn whiten(x: &Matrix, center: bool, stabilizer: GradStabilizer) -> Result<(Matrix, WhitenCache)> {
    whiten_jittered(x, center, stabilizer, 0.0)
}

pub fn whiten_jittered(
    x: &Matrix,
    center: bool,
    stabilizer: GradStabilizer,
    jitter: f64,
) -> Result<(Matrix, WhitenCache)> {
    let layer = SvdLayer::new(RootMode::InvSqrt, stabilizer);
    let (s, cache) = layer.forward_features_jittered(x, center, jitter)?;
    let xc = if center { center_rows(x) } else { x.clone() };
    Ok((
        s.matmul(&xc),
        WhitenCache {
            layer: cache,
            whitening: s,
        },
    ))
}

/// Backward of [`whiten`]: the direct path through `X` plus the path through
/// the covariance.
pub fn whiten_backward(grad_out: &Matrix, cache: &WhitenCache) -> Result<Matrix> {
    let x = cache.layer.input.as_ref().expect("whiten caches its input");
    if grad_out.shape() != x.shape() {
        return Err(Error::Dimension {
            op: "whiten_backward",
            detail: format!("gradient {:?} vs input {:?}", grad_out.shape(), x.shape()),
        });
    }
    let centered = cache.layer.centered;
    let xc = if centered { center_rows(x) } else { x.clone() };
    let grad_s = grad_out.matmul_t(&xc);
    let through_cov = backward(&grad_s, &cache.layer)?;
    let direct = cache.whitening.t_matmul(grad_out);
    let direct = if centered { center_rows(&direct) } else { direct };
    Ok(&through_cov + &direct)
}

/// Global covariance pooling `(XXᵀ/N)^{1/2}` (uncentered).
pub fn gcp_pool(x: &Matrix, stabilizer: GradStabilizer) -> Result<(Matrix, LayerCache)> {
    SvdLayer::new(RootMode::Sqrt, stabilizer).forward_features(x, false)
}

/// The four terms of the second-step covariance
/// `C = ((W − ηG)Y)((W − ηG)Y)ᵀ`.
#[derive(Debug, Clone)]
pub struct SecondStepCovariance {
    /// `W Y Yᵀ Wᵀ`
    pub base: Matrix,
    /// `−η G Y Yᵀ Wᵀ`
    pub grad_left: Matrix,
    /// `−η W Y Yᵀ Gᵀ`
    pub grad_right: Matrix,
    /// `η² G Y Yᵀ Gᵀ`
    pub quadratic: Matrix,
}

impl SecondStepCovariance {
    pub fn expand(w: &Matrix, grad: &Matrix, y: &Matrix, lr: f64) -> Result<Self> {
        w.ensure_same_shape(grad, "second_step_covariance")?;
        if w.cols() != y.rows() {
            return Err(Error::Dimension {
                op: "second_step_covariance",
                detail: format!("weight {:?} vs features {:?}", w.shape(), y.shape()),
            });
        }
        let wy = w.matmul(y);
        let gy = grad.matmul(y);
        Ok(Self {
            base: wy.matmul_t(&wy),
            grad_left: gy.matmul_t(&wy).scale(-lr),
            grad_right: wy.matmul_t(&gy).scale(-lr),
            quadratic: gy.matmul_t(&gy).scale(lr * lr),
        })
    }

    pub fn sum(&self) -> Matrix {
        &(&(&self.base + &self.grad_left) + &self.grad_right) + &self.quadratic
    }

    /// The same covariance formed directly from the updated weight.
    pub fn direct(w: &Matrix, grad: &Matrix, y: &Matrix, lr: f64) -> Matrix {
        let updated = w - &grad.scale(lr);
        let uy = updated.matmul(y);
        uy.matmul_t(&uy)
    }
}
