//! A linear classifier with a spectral head:
//! `input → Pre-SVD weight → (whitening | covariance pooling | identity) → classifier`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ortho::{self, TreatmentConfig};
use crate::random;
use crate::svdlayer::{self, GradStabilizer, LayerCache, RootMode, SvdLayer, WhitenCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// No spectral layer; the classifier sees `W X` directly.
    Linear,
    /// Decorrelated batch normalization: the batch of `W X` is whitened
    /// with the inverse square root of its centered covariance.
    Whiten,
    /// Covariance pooling: each sample is a `c_in × positions` feature map,
    /// pooled into `(Z Zᵀ/positions)^{1/2}` with `Z = W X_s`.
    Gcp { positions: usize },
}

/// Trainable parameter of the Pre-SVD layer.
#[derive(Debug, Clone, PartialEq)]
pub enum PreSvdParam {
    Plain(Matrix),
    /// `V`; the weight is the leading `d × c_in` block of `exp(V − Vᵀ)`.
    Orthogonal(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub pre_svd: PreSvdParam,
    pub head: HeadMode,
    pub classifier: Matrix,
    /// Output channels of the Pre-SVD layer.
    pub d: usize,
    /// Input channels of the Pre-SVD layer (`d_in / positions` for GCP).
    pub c_in: usize,
}

impl ToyModel {
    /// Gaussian initialization (`N(0, 1/c_in)` for a plain weight), or a
    /// random skew generator for orthogonal weights.
    pub fn new(
        rng: &mut impl Rng,
        d_in: usize,
        d: usize,
        classes: usize,
        head: HeadMode,
        orthogonal_weight: bool,
    ) -> Result<Self> {
        let c_in = match head {
            HeadMode::Gcp { positions } => {
                if positions == 0 || !d_in.is_multiple_of(positions) {
                    return Err(Error::Config(format!(
                        "input dimension {d_in} is not a multiple of {positions} positions"
                    )));
                }
                d_in / positions
            }
            _ => d_in,
        };
        if d == 0 || c_in == 0 || classes < 2 {
            return Err(Error::Size(format!(
                "invalid model shape d={d}, c_in={c_in}, classes={classes}"
            )));
        }
        let pre_svd = if orthogonal_weight {
            let n = d.max(c_in);
            PreSvdParam::Orthogonal(random::gaussian_matrix(rng, n, n).scale(1.0 / (n as f64).sqrt()))
        } else {
            PreSvdParam::Plain(random::gaussian_matrix(rng, d, c_in).scale(1.0 / (c_in as f64).sqrt()))
        };
        let feat = feature_dim(head, d);
        let classifier = random::gaussian_matrix(rng, classes, feat).scale(0.1 / (feat as f64).sqrt());
        Ok(Self {
            pre_svd,
            head,
            classifier,
            d,
            c_in,
        })
    }

    /// The Pre-SVD weight before spectral normalization.
    pub fn weight(&self) -> Result<Matrix> {
        match &self.pre_svd {
            PreSvdParam::Plain(w) => Ok(w.clone()),
            PreSvdParam::Orthogonal(v) => ortho::ow_map_rect(v, self.d, self.c_in),
        }
    }

    pub fn classes(&self) -> usize {
        self.classifier.rows()
    }
}

pub(crate) fn feature_dim(head: HeadMode, d: usize) -> usize {
    match head {
        HeadMode::Gcp { .. } => d * d,
        _ => d,
    }
}

/// Intermediate values of one forward pass.
pub(crate) enum HeadCache {
    Linear,
    Whiten(WhitenCache),
    Gcp(Vec<(Matrix, LayerCache)>),
}

pub(crate) struct Forward {
    pub features: Matrix,
    pub logits: Matrix,
    pub head: HeadCache,
    /// Condition number of the covariance the spectral layer decomposed
    /// (worst sample for GCP; the centered batch covariance of `W X` for
    /// the linear head).
    pub kappa: f64,
}

/// `c_in × positions` feature map of sample `j` (channel-major layout).
fn sample_map(x: &Matrix, j: usize, c_in: usize, positions: usize) -> Matrix {
    Matrix::from_fn(c_in, positions, |c, p| x[(c * positions + p, j)])
}

/// Columns the Pre-SVD weight multiplies: the batch itself, or for GCP every
/// position of every sample side by side (`c_in × N·positions`).
pub(crate) fn pre_svd_inputs(model: &ToyModel, x: &Matrix) -> Matrix {
    match model.head {
        HeadMode::Gcp { positions } => Matrix::from_fn(model.c_in, x.cols() * positions, |c, k| {
            x[(c * positions + k % positions, k / positions)]
        }),
        _ => x.clone(),
    }
}

/// `jitter` is relative: each decomposed covariance gets `jitter · tr(P)`
/// added to its diagonal (`tr(P)` bounds `λ₁` from above).
pub(crate) fn forward(
    model: &ToyModel,
    weight: &Matrix,
    x: &Matrix,
    stabilizer: GradStabilizer,
    jitter: f64,
) -> Result<Forward> {
    let (features, head, kappa) = match model.head {
        HeadMode::Linear => {
            let z = weight.matmul(x);
            let kappa = crate::matcore::cond_number(&svdlayer::covariance(&z, true)?)?;
            (z, HeadCache::Linear, kappa)
        }
        HeadMode::Whiten => {
            let z = weight.matmul(x);
            let shift = jitter * svdlayer::center_rows(&z).frobenius_norm().powi(2) / z.cols() as f64;
            let (y, cache) = svdlayer::whiten_jittered(&z, true, stabilizer, shift)?;
            let kappa = cache.layer.condition();
            (y, HeadCache::Whiten(cache), kappa)
        }
        HeadMode::Gcp { positions } => {
            let layer = SvdLayer::new(RootMode::Sqrt, stabilizer);
            let d = model.d;
            let mut feats = Matrix::zeros(d * d, x.cols());
            let mut caches = Vec::with_capacity(x.cols());
            let mut log_kappa = 0.0;
            for j in 0..x.cols() {
                let xs = sample_map(x, j, model.c_in, positions);
                let z = weight.matmul(&xs);
                let shift = jitter * z.frobenius_norm().powi(2) / positions as f64;
                let (q, cache) = layer.forward_features_jittered(&z, false, shift)?;
                log_kappa += cache.condition().ln();
                for (k, v) in q.as_slice().iter().enumerate() {
                    feats[(k, j)] = *v;
                }
                caches.push((xs, cache));
            }
            let kappa = (log_kappa / x.cols() as f64).exp();
            (feats, HeadCache::Gcp(caches), kappa)
        }
    };
    let logits = model.classifier.matmul(&features);
    Ok(Forward {
        features,
        logits,
        head,
        kappa,
    })
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub(crate) fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let (k, b) = logits.shape();
    let mut grad = Matrix::zeros(k, b);
    let mut loss = 0.0;
    for j in 0..b {
        let col = logits.column(j);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - col[labels[j]];
        for i in 0..k {
            let p = exps[i] / sum;
            grad[(i, j)] = (p - if i == labels[j] { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    (loss / b as f64, grad)
}

pub(crate) struct Gradients {
    pub loss: f64,
    /// `∂l/∂W` for the weight used in the forward pass.
    pub weight: Matrix,
    pub classifier: Matrix,
    pub kappa: f64,
}

pub(crate) fn loss_and_gradients(
    model: &ToyModel,
    weight: &Matrix,
    x: &Matrix,
    labels: &[usize],
    stabilizer: GradStabilizer,
    jitter: f64,
) -> Result<Gradients> {
    let fwd = forward(model, weight, x, stabilizer, jitter)?;
    let (loss, dlogits) = cross_entropy(&fwd.logits, labels);
    let grad_classifier = dlogits.matmul_t(&fwd.features);
    let dfeat = model.classifier.t_matmul(&dlogits);
    let grad_weight = match &fwd.head {
        HeadCache::Linear => dfeat.matmul_t(x),
        HeadCache::Whiten(cache) => svdlayer::whiten_backward(&dfeat, cache)?.matmul_t(x),
        HeadCache::Gcp(caches) => {
            let d = model.d;
            let mut gw = Matrix::zeros(d, model.c_in);
            for (j, (xs, cache)) in caches.iter().enumerate() {
                let dq = Matrix::from_vec(d, d, dfeat.column(j))?;
                let dz = svdlayer::backward(&dq, cache)?;
                gw += &dz.matmul_t(xs);
            }
            gw
        }
    };
    Ok(Gradients {
        loss,
        weight: grad_weight,
        classifier: grad_classifier,
        kappa: fwd.kappa,
    })
}

/// Task loss of `model` on a batch, with treatments shaping the weight.
pub fn batch_loss(
    model: &ToyModel,
    x: &Matrix,
    labels: &[usize],
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
) -> Result<f64> {
    let w = ortho::effective_weight(&model.weight()?, treatments)?;
    let fwd = forward(model, &w, x, stabilizer, 0.0)?;
    Ok(cross_entropy(&fwd.logits, labels).0)
}

/// Fraction of correctly classified samples, evaluated in chunks of `batch`.
pub fn accuracy(
    model: &ToyModel,
    x: &Matrix,
    labels: &[usize],
    treatments: &TreatmentConfig,
    stabilizer: GradStabilizer,
    batch: usize,
) -> Result<f64> {
    let w = ortho::effective_weight(&model.weight()?, treatments)?;
    let n = x.cols();
    if n == 0 {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        // Fold a short tail into the previous chunk so the whitening
        // covariance always has enough samples.
        let mut end = (start + batch).min(n);
        if n - end < batch / 2 {
            end = n;
        }
        let idx: Vec<usize> = (start..end).collect();
        let xb = Matrix::from_fn(x.rows(), idx.len(), |i, j| x[(i, idx[j])]);
        let fwd = forward(model, &w, &xb, stabilizer, 0.0)?;
        for (j, &k) in idx.iter().enumerate() {
            let col = fwd.logits.column(j);
            let pred = (0..col.len())
                .max_by(|&a, &b| col[a].total_cmp(&col[b]))
                .unwrap_or(0);
            if pred == labels[k] {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let logits = Matrix::zeros(4, 3);
        let (loss, grad) = cross_entropy(&logits, &[0, 1, 3]);
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        // Each column sums to zero.
        for j in 0..3 {
            assert!(grad.column(j).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn gcp_requires_divisible_input() {
        let mut rng = random::rng(0);
        assert!(ToyModel::new(&mut rng, 10, 3, 2, HeadMode::Gcp { positions: 4 }, false).is_err());
        let m = ToyModel::new(&mut rng, 12, 3, 2, HeadMode::Gcp { positions: 4 }, false).unwrap();
        assert_eq!((m.c_in, m.classifier.cols()), (3, 9));
    }

    #[test]
    fn orthogonal_parameterization_has_orthonormal_rows() {
        let mut rng = random::rng(1);
        let m = ToyModel::new(&mut rng, 16, 8, 3, HeadMode::Whiten, true).unwrap();
        assert!(m.weight().unwrap().orthogonality_error() < 1e-12);
    }
}
