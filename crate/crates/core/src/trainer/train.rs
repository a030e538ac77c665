//! Mini-batch SGD on the toy model with per-step conditioning records.

use rand::seq::SliceRandom;

use super::data::Dataset;
use super::model::{self, forward, loss_and_gradients, Gradients, PreSvdParam, ToyModel};
use super::trace::{StepRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ortho::{self, TreatmentConfig};
use crate::random;
use crate::svdlayer::GradStabilizer;

/// Relative diagonal jitter added per retry, times the retry index.
pub const RETRY_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Heavy-ball coefficient; 0 is plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub stabilizer: GradStabilizer,
    /// Jittered eigensolver retries per step; 0 lets failures abort the run.
    pub retries: u32,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            momentum: 0.0,
            seed: 0,
            stabilizer: GradStabilizer::default(),
            retries: 3,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Consecutive chunks of `batch` indices; a tail shorter than half a batch
/// is folded into the previous chunk.
pub(crate) fn chunks(order: &[usize], batch: usize) -> Vec<&[usize]> {
    let n = order.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = (start + batch).min(n);
        if n - end < batch.div_ceil(2) {
            end = n;
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

/// Full-dataset loss, in chunks of `batch`.
fn dataset_loss(
    model: &ToyModel,
    data: &Dataset,
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
    batch: usize,
) -> Result<f64> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for idx in chunks(&order, batch) {
        let (x, y) = data.gather(idx);
        total += model::batch_loss(model, &x, &y, treatments, stabilizer)? * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// κ of the head-input covariance over the whole dataset.
fn dataset_kappa(
    model: &ToyModel,
    data: &Dataset,
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
) -> Result<f64> {
    let w = ortho::effective_weight(&model.weight()?, treatments)?;
    Ok(forward(model, &w, &data.features, stabilizer, 0.0)?.kappa)
}

fn gradients_with_retry(
    model: &ToyModel,
    weight: &Matrix,
    x: &Matrix,
    labels: &[usize],
    options: &TrainOptions,
) -> Result<(Option<Gradients>, u32)> {
    let mut attempt = 0;
    loop {
        let jitter = RETRY_JITTER * attempt as f64;
        match loss_and_gradients(model, weight, x, labels, options.stabilizer, jitter) {
            Ok(g) => return Ok((Some(g), attempt)),
            Err(e) if options.retries == 0 => return Err(e),
            Err(_) if attempt < options.retries => attempt += 1,
            Err(_) => return Ok((None, attempt)),
        }
    }
}

/// Trains `model` in place on `train`, reporting accuracy on `validation`
/// after every epoch.
///
/// Each step: forward with the effective weight, backward through the
/// spectral head, treatments on the Pre-SVD gradient, then an SGD update of
/// the Pre-SVD parameter (at the treated rate) and of the classifier (at the
/// base rate).
pub fn train(
    model: &mut ToyModel,
    train: &Dataset,
    validation: &Dataset,
    treatments: &TreatmentConfig,
    options: &TrainOptions,
) -> Result<TrainTrace> {
    treatments.validate()?;
    options.validate()?;
    if matches!(model.pre_svd, PreSvdParam::Orthogonal(_)) != treatments.use_ow {
        return Err(Error::Config(
            "orthogonal-weight treatment and model parameterization disagree".into(),
        ));
    }
    if train.dim() != model.c_in * positions(model) || validation.dim() != train.dim() {
        return Err(Error::Dimension {
            op: "train",
            detail: format!(
                "model expects {} inputs, data has {}",
                model.c_in * positions(model),
                train.dim()
            ),
        });
    }
    if train.len() < options.batch_size {
        return Err(Error::Size(format!(
            "{} training samples do not fill a batch of {}",
            train.len(),
            options.batch_size
        )));
    }

    let stab = options.stabilizer;
    let mut trace = TrainTrace {
        label: treatments.label(),
        base_lr: treatments.base_lr,
        initial_kappa: dataset_kappa(model, train, treatments, stab)?,
        initial_loss: dataset_loss(model, train, treatments, stab, options.batch_size)?,
        final_loss: f64::NAN,
        steps: Vec::new(),
        epoch_accuracy: Vec::new(),
        retry_events: 0,
        failures: 0,
    };

    let mut rng = random::rng(options.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut vel_pre = match &model.pre_svd {
        PreSvdParam::Plain(w) | PreSvdParam::Orthogonal(w) => Matrix::zeros(w.rows(), w.cols()),
    };
    let mut vel_cls = Matrix::zeros(model.classifier.rows(), model.classifier.cols());
    let mu = options.momentum;

    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        for idx in chunks(&order, options.batch_size) {
            let (x, labels) = train.gather(idx);
            let w = model.weight()?;
            let w_eff = ortho::effective_weight(&w, treatments)?;
            let (grads, retries) = gradients_with_retry(model, &w_eff, &x, &labels, options)?;
            let step = trace.steps.len();
            if retries > 0 {
                trace.retry_events += 1;
            }
            let Some(grads) = grads else {
                trace.failures += 1;
                trace.steps.push(StepRecord {
                    step,
                    epoch,
                    kappa: f64::INFINITY,
                    loss: f64::NAN,
                    lr: 0.0,
                    olr_fired: false,
                    retries,
                    failed: true,
                });
                continue;
            };

            let treated = ortho::apply_treatments(&w, &grads.weight, treatments)?;
            let grad_param = match &model.pre_svd {
                PreSvdParam::Plain(_) => treated.grad,
                PreSvdParam::Orthogonal(v) => ortho::ow_backward_rect(v, &treated.grad)?,
            };
            vel_pre = &vel_pre.scale(mu) + &grad_param;
            vel_cls = &vel_cls.scale(mu) + &grads.classifier;
            match &mut model.pre_svd {
                PreSvdParam::Plain(p) | PreSvdParam::Orthogonal(p) => {
                    *p -= &vel_pre.scale(treated.step_lr)
                }
            }
            model.classifier -= &vel_cls.scale(treatments.base_lr);

            trace.steps.push(StepRecord {
                step,
                epoch,
                kappa: grads.kappa,
                loss: grads.loss,
                lr: treated.step_lr,
                olr_fired: treated.olr.is_some_and(|o| o.used),
                retries,
                failed: false,
            });
        }
        let acc = model::accuracy(
            model,
            &validation.features,
            &validation.labels,
            treatments,
            stab,
            options.batch_size,
        )?;
        trace.epoch_accuracy.push(acc);
    }
    trace.final_loss = dataset_loss(model, train, treatments, stab, options.batch_size)?;
    Ok(trace)
}

fn positions(model: &ToyModel) -> usize {
    match model.head {
        super::model::HeadMode::Gcp { positions } => positions,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_folds_short_tail() {
        let order: Vec<usize> = (0..10).collect();
        let sizes: Vec<usize> = chunks(&order, 4).iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let sizes: Vec<usize> = chunks(&order, 3).iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![3, 3, 4]);
    }
}
