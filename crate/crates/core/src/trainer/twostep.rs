//! Two-step simulation of how one update of the Pre-SVD weight shapes the
//! covariance seen at the next step.

use super::model::{loss_and_gradients, pre_svd_inputs, ToyModel};
use crate::error::{Error, Result};
use crate::matcore::{cond_number, condition_from_spectrum, singular_values};
use crate::matrix::Matrix;
use crate::ortho::{self, TreatmentConfig};
use crate::svdlayer::{GradStabilizer, SecondStepCovariance};

/// Maximum relative gap between the expanded and the direct second-step
/// covariance.
pub const EXPANSION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TwoStep {
    /// κ of `W X Xᵀ Wᵀ` on the first batch.
    pub kappa_step1: f64,
    /// κ of `C` on the second batch.
    pub kappa_step2: f64,
    /// `C = ((W − ηG)Y)((W − ηG)Y)ᵀ` formed directly.
    pub c: Matrix,
    pub expansion: SecondStepCovariance,
    /// `‖Σ terms − C‖_F / ‖C‖_F`.
    pub residual: f64,
    /// Treated gradient `G` that was descended.
    pub grad: Matrix,
    /// `s_max / s_min` of `G` (`+∞` when rank-deficient).
    pub grad_kappa: f64,
    pub step_lr: f64,
}

/// One forward/backward pass on `(x, labels)`, treatments on the Pre-SVD
/// gradient, a plain update of `W` and the covariance of the updated weight
/// on `y`. With orthogonal weights the update is applied to the weight
/// itself, not to its generator, so the expansion stays exact. For the GCP
/// head the covariances pool every position of every sample.
pub fn two_step_sim(
    model: &ToyModel,
    x: &Matrix,
    labels: &[usize],
    y: &Matrix,
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
) -> Result<TwoStep> {
    let w = model.weight()?;
    let w_eff = ortho::effective_weight(&w, treatments)?;
    let grads = loss_and_gradients(model, &w_eff, x, labels, stabilizer, 0.0)?;
    let treated = ortho::apply_treatments(&w, &grads.weight, treatments)?;
    let lr = treated.step_lr;

    let wx = w.matmul(&pre_svd_inputs(model, x));
    let kappa_step1 = cond_number(&wx.matmul_t(&wx))?;
    let y = pre_svd_inputs(model, y);
    let expansion = SecondStepCovariance::expand(&w, &treated.grad, &y, lr)?;
    let c = SecondStepCovariance::direct(&w, &treated.grad, &y, lr);
    let norm = c.frobenius_norm();
    let residual = (&expansion.sum() - &c).frobenius_norm() / if norm > 0.0 { norm } else { 1.0 };
    if residual.is_nan() || residual > EXPANSION_TOL {
        return Err(Error::Invariant(format!(
            "second-step expansion deviates from the direct product by {residual:e}"
        )));
    }
    let kappa_step2 = cond_number(&c)?;
    let grad_kappa = condition_from_spectrum(&singular_values(&treated.grad)?);
    Ok(TwoStep {
        kappa_step1,
        kappa_step2,
        c,
        expansion,
        residual,
        grad: treated.grad,
        grad_kappa,
        step_lr: lr,
    })
}
