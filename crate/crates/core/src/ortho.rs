//! Conditioning treatments for the layer feeding the SVD meta-layer:
//! spectral normalization, soft orthogonality loss, orthogonal weights via
//! the matrix exponential, nearest orthogonal gradient, and the optimal
//! learning rate with its switch rule.

use crate::error::{Error, Result};
use crate::matcore::{expm, expm_frechet, singular_values, svd};
use crate::matrix::Matrix;

/// Default coefficient of the orthogonality penalty.
pub const DEFAULT_OL_WEIGHT: f64 = 1e-3;
/// Singular values below `NOG_RANK_TOL · s₁` are dropped by [`nog`].
pub const NOG_RANK_TOL: f64 = 1e-10;

/// `W / σ_max(W)`.
pub fn spectral_normalize(w: &Matrix) -> Result<Matrix> {
    let sigma = top_singular_value(w)?;
    Ok(w.scale(1.0 / sigma))
}

fn top_singular_value(w: &Matrix) -> Result<f64> {
    let sigma = singular_values(w)?.first().copied().unwrap_or(0.0);
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(Error::Degenerate {
            op: "spectral_normalize",
            detail: "zero matrix has no spectral norm".into(),
        })
    }
}

/// Gradient w.r.t. `W` of `l(W / σ_max(W))`, given `grad = ∂l/∂(W/σ)`:
/// `(grad − ⟨grad, W/σ⟩ u₁v₁ᵀ) / σ`.
pub fn spectral_normalize_backward(w: &Matrix, grad: &Matrix) -> Result<Matrix> {
    w.ensure_same_shape(grad, "spectral_normalize_backward")?;
    let f = svd(w, 0.0)?;
    let sigma = f.singvals.first().copied().ok_or_else(|| Error::Degenerate {
        op: "spectral_normalize_backward",
        detail: "zero matrix has no spectral norm".into(),
    })?;
    let normalized = w.scale(1.0 / sigma);
    let proj = grad.inner(&normalized);
    let u = Matrix::column_vector(&f.left.column(0));
    let v = Matrix::column_vector(&f.right.column(0));
    Ok((grad - &u.matmul_t(&v).scale(proj)).scale(1.0 / sigma))
}

/// Soft orthogonality `‖WWᵀ − I‖_F` and its gradient `2(WWᵀ − I)W / loss`
/// (zero gradient at zero loss).
pub fn ol_penalty(w: &Matrix) -> (f64, Matrix) {
    let defect = &w.matmul_t(w) - &Matrix::identity(w.rows());
    let loss = defect.frobenius_norm();
    if loss == 0.0 {
        return (0.0, Matrix::zeros(w.rows(), w.cols()));
    }
    (loss, defect.matmul(w).scale(2.0 / loss))
}

/// `exp(V − Vᵀ)`, orthogonal for every square `V`.
pub fn ow_map(v: &Matrix) -> Result<Matrix> {
    v.ensure_square("ow_map")?;
    expm(&(v - &v.transpose()))
}

/// Gradient w.r.t. `V` of `l(exp(V − Vᵀ))` given `grad = ∂l/∂exp(V − Vᵀ)`.
///
/// The adjoint of the Fréchet derivative `L(A, ·)` is `L(Aᵀ, ·)`, and the
/// adjoint of `V ↦ V − Vᵀ` is `M ↦ M − Mᵀ`.
pub fn ow_backward(v: &Matrix, grad: &Matrix) -> Result<Matrix> {
    v.ensure_square("ow_backward")?;
    v.ensure_same_shape(grad, "ow_backward")?;
    let a = v - &v.transpose();
    let m = expm_frechet(&a.transpose(), grad)?;
    Ok(&m - &m.transpose())
}

/// Leading `rows × cols` block of `exp(V − Vᵀ)` for `V` of size
/// `max(rows, cols)`: a matrix with orthonormal rows (or columns).
pub fn ow_map_rect(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    check_rect(v, rows, cols)?;
    Ok(ow_map(v)?.block(0, 0, rows, cols))
}

pub fn ow_backward_rect(v: &Matrix, grad: &Matrix) -> Result<Matrix> {
    check_rect(v, grad.rows(), grad.cols())?;
    let mut padded = Matrix::zeros(v.rows(), v.cols());
    padded.set_block(0, 0, grad);
    ow_backward(v, &padded)
}

fn check_rect(v: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if v.shape() != (rows.max(cols), rows.max(cols)) {
        return Err(Error::Dimension {
            op: "ow_map_rect",
            detail: format!(
                "parameter {:?} cannot produce a {rows}x{cols} weight",
                v.shape()
            ),
        });
    }
    Ok(())
}

/// Result of [`nog`].
#[derive(Debug, Clone)]
pub struct NearestOrthogonal {
    pub value: Matrix,
    pub rank: usize,
    /// Set when the input had no nonzero singular value.
    pub degenerate: bool,
}

/// Nearest orthogonal gradient: `G = U S Vᵀ ↦ U Vᵀ` over the singular
/// triplets with `sᵢ > rank_tol · s₁`. Rank-deficient input yields the
/// partial isometry on its nonzero spectrum.
pub fn nog(g: &Matrix, rank_tol: f64) -> Result<NearestOrthogonal> {
    let f = svd(g, rank_tol)?;
    if f.rank() == 0 {
        return Ok(NearestOrthogonal {
            value: Matrix::zeros(g.rows(), g.cols()),
            rank: 0,
            degenerate: true,
        });
    }
    Ok(NearestOrthogonal {
        value: f.polar_factor(),
        rank: f.rank(),
        degenerate: false,
    })
}

/// Optimal learning rate and switch-rule decision for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlrOutcome {
    pub eta_star: f64,
    pub used: bool,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl OlrOutcome {
    /// The step size the switch rule selects.
    pub fn step(&self, base_lr: f64) -> f64 {
        if self.used {
            self.eta_star
        } else {
            base_lr
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.eta_star >= self.lower_bound && self.eta_star <= self.upper_bound
    }
}

/// Bounds `[1/(N²+2), N²/(N²+2)]` on `η*` for an `N`-row orthogonal weight.
pub fn olr_bounds(rows: usize) -> (f64, f64) {
    let n2 = (rows * rows) as f64;
    (1.0 / (n2 + 2.0), n2 / (n2 + 2.0))
}

/// `η* = wᵀw·lᵀw / (wᵀw·lᵀl + 2(lᵀw)²)` with `w = vec(W)`, `l = vec(G)`.
///
/// The switch rule uses `η*` only when `0 < η* < base_lr`; a non-positive
/// `η*` would step against the gradient.
pub fn olr(w: &Matrix, g: &Matrix, base_lr: f64) -> Result<OlrOutcome> {
    w.ensure_same_shape(g, "olr")?;
    let (lower_bound, upper_bound) = olr_bounds(w.rows());
    let ww = w.inner(w);
    let lw = g.inner(w);
    let ll = g.inner(g);
    let den = ww * ll + 2.0 * lw * lw;
    let eta_star = if ll == 0.0 || den == 0.0 {
        0.0
    } else {
        ww * lw / den
    };
    Ok(OlrOutcome {
        eta_star,
        used: eta_star > 0.0 && eta_star < base_lr,
        lower_bound,
        upper_bound,
    })
}

/// Which treatments are active on the layer feeding the SVD meta-layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreatmentConfig {
    pub use_sn: bool,
    /// Orthogonality-loss coefficient; `None` disables the loss.
    pub ol_weight: Option<f64>,
    pub use_ow: bool,
    pub use_nog: bool,
    pub use_olr: bool,
    pub base_lr: f64,
}

impl TreatmentConfig {
    pub fn baseline(base_lr: f64) -> Self {
        Self {
            use_sn: false,
            ol_weight: None,
            use_ow: false,
            use_nog: false,
            use_olr: false,
            base_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!(
                "base learning rate must be finite and positive, got {}",
                self.base_lr
            )));
        }
        if let Some(weight) = self.ol_weight {
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(Error::Config(format!(
                    "orthogonality loss weight must be non-negative, got {weight}"
                )));
            }
            if self.use_ow {
                return Err(Error::Config(
                    "orthogonality loss and orthogonal weights cannot be combined".into(),
                ));
            }
        }
        Ok(())
    }

    /// Short label such as `nog+ow+olr`, or `svd` when nothing is active.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_sn {
            parts.push("sn");
        }
        if self.ol_weight.is_some() {
            parts.push("ol");
        }
        if self.use_ow {
            parts.push("ow");
        }
        if self.use_nog {
            parts.push("nog");
        }
        if self.use_olr {
            parts.push("olr");
        }
        if parts.is_empty() {
            "svd".into()
        } else {
            parts.join("+")
        }
    }
}

/// What one step actually uses after treatments.
#[derive(Debug, Clone)]
pub struct TreatedStep {
    /// Weight multiplied into the forward pass.
    pub weight: Matrix,
    /// Gradient descended on the (pre-normalization) weight.
    pub grad: Matrix,
    pub step_lr: f64,
    pub olr: Option<OlrOutcome>,
    pub nog_degenerate: bool,
}

/// The weight the forward pass multiplies by: `W` or `W / σ_max(W)`.
pub fn effective_weight(w: &Matrix, config: &TreatmentConfig) -> Result<Matrix> {
    if config.use_sn {
        spectral_normalize(w)
    } else {
        Ok(w.clone())
    }
}

/// Composes the treatments in the fixed order SN → OL → NOG → OLR.
///
/// `w` is the weight before spectral normalization (with orthogonal weights
/// active, the orthogonal matrix produced upstream) and `grad` the gradient
/// w.r.t. the weight the forward pass used.
pub fn apply_treatments(w: &Matrix, grad: &Matrix, config: &TreatmentConfig) -> Result<TreatedStep> {
    config.validate()?;
    w.ensure_same_shape(grad, "apply_treatments")?;
    let weight = effective_weight(w, config)?;
    let mut g = if config.use_sn {
        spectral_normalize_backward(w, grad)?
    } else {
        grad.clone()
    };
    if let Some(coef) = config.ol_weight {
        let (_, ol_grad) = ol_penalty(w);
        g += &ol_grad.scale(coef);
    }
    let mut nog_degenerate = false;
    if config.use_nog {
        let r = nog(&g, NOG_RANK_TOL)?;
        nog_degenerate = r.degenerate;
        g = r.value;
    }
    let (step_lr, olr_outcome) = if config.use_olr {
        let outcome = olr(w, &g, config.base_lr)?;
        (outcome.step(config.base_lr), Some(outcome))
    } else {
        (config.base_lr, None)
    };
    Ok(TreatedStep {
        weight,
        grad: g,
        step_lr,
        olr: olr_outcome,
        nog_degenerate,
    })
}
