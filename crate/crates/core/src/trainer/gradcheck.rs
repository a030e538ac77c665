//! End-to-end finite-difference check of the model's backward pass.

use super::model::{batch_loss, loss_and_gradients, PreSvdParam, ToyModel};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::ortho::{self, TreatmentConfig};
use crate::svdlayer::GradStabilizer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    /// Relative error of the Pre-SVD parameter block.
    pub pre_svd: f64,
    pub classifier: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.pre_svd.max(self.classifier)
    }
}

/// `‖a − f‖_∞ / ‖f‖_∞`, or the absolute gap when `f` vanishes.
pub fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let gap = (analytic - numeric).max_abs();
    let scale = numeric.max_abs();
    if scale > 0.0 {
        gap / scale
    } else {
        gap
    }
}

/// Analytic gradients of the task loss w.r.t. the Pre-SVD parameter and the
/// classifier. Only the weight treatments (SN, OW) enter; gradient
/// treatments change the descent direction on purpose and are skipped.
pub fn analytic_gradients(
    model: &ToyModel,
    x: &Matrix,
    labels: &[usize],
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
) -> Result<(Matrix, Matrix)> {
    let w = model.weight()?;
    let w_eff = ortho::effective_weight(&w, treatments)?;
    let g = loss_and_gradients(model, &w_eff, x, labels, stabilizer, 0.0)?;
    let gw = if treatments.use_sn {
        ortho::spectral_normalize_backward(&w, &g.weight)?
    } else {
        g.weight
    };
    let gp = match &model.pre_svd {
        PreSvdParam::Plain(_) => gw,
        PreSvdParam::Orthogonal(v) => ortho::ow_backward_rect(v, &gw)?,
    };
    Ok((gp, g.classifier))
}

fn param(m: &mut ToyModel) -> &mut Matrix {
    match &mut m.pre_svd {
        PreSvdParam::Plain(p) | PreSvdParam::Orthogonal(p) => p,
    }
}

/// Central differences with step `h` over every parameter entry.
pub fn gradcheck(
    model: &ToyModel,
    x: &Matrix,
    labels: &[usize],
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
    h: f64,
) -> Result<GradcheckReport> {
    let (ga, ca) = analytic_gradients(model, x, labels, treatments, stabilizer)?;
    let loss = |m: &ToyModel| batch_loss(m, x, labels, treatments, stabilizer);

    let mut probe = model.clone();
    let (rows, cols) = param(&mut probe).shape();
    let mut gn = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let base = param(&mut probe)[(i, j)];
            param(&mut probe)[(i, j)] = base + h;
            let plus = loss(&probe)?;
            param(&mut probe)[(i, j)] = base - h;
            let minus = loss(&probe)?;
            param(&mut probe)[(i, j)] = base;
            gn[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    let (rows, cols) = probe.classifier.shape();
    let mut cn = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let base = probe.classifier[(i, j)];
            probe.classifier[(i, j)] = base + h;
            let plus = loss(&probe)?;
            probe.classifier[(i, j)] = base - h;
            let minus = loss(&probe)?;
            probe.classifier[(i, j)] = base;
            cn[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(GradcheckReport {
        pre_svd: rel_err(&ga, &gn),
        classifier: rel_err(&ca, &cn),
    })
}
