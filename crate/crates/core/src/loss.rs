//! Softmax cross-entropy with label smoothing and the additive angular
//! margin (ArcFace) head.

use rand::Rng;
use thiserror::Error;

use crate::nn::{Param, Tensor};

pub const DEFAULT_SMOOTHING: f64 = 0.1;
pub const DEFAULT_ARC_SCALE: f64 = 30.0;
pub const DEFAULT_ARC_MARGIN: f64 = 0.5;

const COS_CLAMP: f64 = 1e-7;
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    IndexOutOfRange { label: usize, classes: usize },
    #[error("smoothing epsilon must be in [0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("embedding row {0} has (near) zero norm")]
    ZeroEmbedding(usize),
    #[error("class weight row {0} has (near) zero norm")]
    ZeroWeight(usize),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("invalid head: {0}")]
    InvalidHead(String),
    #[error("backward called before forward")]
    NoForwardCache,
}

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTarget {
    pub distribution: Vec<f64>,
}

pub fn smooth_labels(label: usize, classes: usize, epsilon: f64) -> Result<SmoothedTarget, LossError> {
    if label >= classes {
        return Err(LossError::IndexOutOfRange { label, classes });
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(LossError::InvalidEpsilon(epsilon));
    }
    let off = epsilon / classes as f64;
    let mut distribution = vec![off; classes];
    distribution[label] = 1.0 - epsilon + off;
    Ok(SmoothedTarget { distribution })
}

/// Stacks smoothed targets into an `[N, K]` tensor.
pub fn smoothed_batch(labels: &[usize], classes: usize, epsilon: f64) -> Result<Tensor, LossError> {
    let mut data = Vec::with_capacity(labels.len() * classes);
    for &l in labels {
        data.extend(smooth_labels(l, classes, epsilon)?.distribution);
    }
    Tensor::from_vec(&[labels.len(), classes], data).map_err(|e| LossError::ShapeMismatch { expected: "[N, K]".into(), found: e.to_string() })
}

/// Row-wise softmax of an `[N, K]` tensor.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.dim(1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

fn check_2d(t: &Tensor, what: &str) -> Result<(usize, usize), LossError> {
    if t.shape().len() != 2 {
        return Err(LossError::ShapeMismatch { expected: format!("{what} [N, K]"), found: format!("{:?}", t.shape()) });
    }
    Ok((t.dim(0), t.dim(1)))
}

/// Mean cross-entropy against target distributions, with the gradient
/// `(softmax − target)/N` with respect to the logits.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor), LossError> {
    let (n, k) = check_2d(logits, "logits")?;
    if targets.shape() != logits.shape() {
        return Err(LossError::ShapeMismatch { expected: format!("targets {:?}", logits.shape()), found: format!("{:?}", targets.shape()) });
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[n, k]);
    for i in 0..n {
        let row = logits.row(i);
        let t = targets.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for j in 0..k {
            let log_p = row[j] - lse;
            if t[j] != 0.0 {
                loss -= t[j] * log_p;
            }
            grad.row_mut(i)[j] = (log_p.exp() - t[j]) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Index of the largest value in each row; ties go to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = t.dim(1);
    t.data()
        .chunks_exact(k)
        .map(|row| row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best }))
        .collect()
}

struct ArcCache {
    unit_x: Tensor,
    x_norms: Vec<f64>,
    unit_w: Tensor,
    w_norms: Vec<f64>,
    /// Unclamped cosines.
    cos: Tensor,
    labels: Option<Vec<usize>>,
}

/// Class-weight matrix `[K, D]` with scale `s` and angular margin `m`.
pub struct ArcFaceHead {
    pub weight: Param,
    scale: f64,
    margin: f64,
    cache: Option<ArcCache>,
}

impl ArcFaceHead {
    pub fn new(name: &str, weight: Tensor, scale: f64, margin: f64) -> Result<Self, LossError> {
        if weight.shape().len() != 2 {
            return Err(LossError::ShapeMismatch { expected: "weight [K, D]".into(), found: format!("{:?}", weight.shape()) });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LossError::InvalidHead(format!("scale must be positive, got {scale}")));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&margin) {
            return Err(LossError::InvalidHead(format!("margin must be in [0, π/2), got {margin}")));
        }
        Ok(Self { weight: Param::new(format!("{name}.weight"), weight), scale, margin, cache: None })
    }

    /// Xavier-uniform class weights.
    pub fn init<R: Rng + ?Sized>(name: &str, classes: usize, dim: usize, scale: f64, margin: f64, rng: &mut R) -> Result<Self, LossError> {
        let bound = (6.0 / (classes + dim) as f64).sqrt();
        Self::new(name, Tensor::uniform(&[classes, dim], -bound, bound, rng), scale, margin)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn classes(&self) -> usize {
        self.weight.value.dim(0)
    }

    /// Target-class logit as a function of the cosine, and its derivative.
    /// Outside `±(1 − 1e-7)` the derivative is treated as zero.
    fn target_logit(&self, c: f64) -> (f64, f64) {
        let (s, m) = (self.scale, self.margin);
        if c > -m.cos() {
            let sin = (1.0 - c * c).max(0.0).sqrt();
            (s * (c * m.cos() - sin * m.sin()), s * (m.cos() + c * m.sin() / sin))
        } else {
            (s * (c - m * m.sin()), s)
        }
    }

    /// Logits `s·cosθ`, with the margin applied to each row's label when
    /// labels are given. Caches what [`ArcFaceHead::backward`] needs.
    pub fn forward(&mut self, embeddings: &Tensor, labels: Option<&[usize]>) -> Result<Tensor, LossError> {
        let (n, d) = check_2d(embeddings, "embeddings")?;
        let k = self.classes();
        if d != self.weight.value.dim(1) {
            return Err(LossError::ShapeMismatch { expected: format!("embedding dim {}", self.weight.value.dim(1)), found: format!("{d}") });
        }
        if let Some(l) = labels {
            if l.len() != n {
                return Err(LossError::ShapeMismatch { expected: format!("{n} labels"), found: format!("{}", l.len()) });
            }
            if let Some(&bad) = l.iter().find(|&&l| l >= k) {
                return Err(LossError::IndexOutOfRange { label: bad, classes: k });
            }
        }
        let (unit_x, x_norms) = normalize_rows(embeddings).map_err(LossError::ZeroEmbedding)?;
        let (unit_w, w_norms) = normalize_rows(&self.weight.value).map_err(LossError::ZeroWeight)?;
        let mut cos = Tensor::zeros(&[n, k]);
        let mut logits = Tensor::zeros(&[n, k]);
        for i in 0..n {
            for j in 0..k {
                let raw: f64 = unit_x.row(i).iter().zip(unit_w.row(j)).map(|(a, b)| a * b).sum();
                cos.row_mut(i)[j] = raw;
                let c = raw.clamp(-1.0, 1.0);
                logits.row_mut(i)[j] = match labels {
                    Some(l) if l[i] == j => self.target_logit(c).0,
                    _ => self.scale * c,
                };
            }
        }
        self.cache = Some(ArcCache { unit_x, x_norms, unit_w, w_norms, cos, labels: labels.map(<[usize]>::to_vec) });
        Ok(logits)
    }

    /// Accumulates the class-weight gradient and returns the embedding gradient.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor, LossError> {
        let cache = self.cache.take().ok_or(LossError::NoForwardCache)?;
        let (n, k) = (cache.cos.dim(0), cache.cos.dim(1));
        if grad_logits.shape() != [n, k] {
            self.cache = Some(cache);
            return Err(LossError::ShapeMismatch { expected: format!("[{n}, {k}]"), found: format!("{:?}", grad_logits.shape()) });
        }
        let d = cache.unit_x.dim(1);
        let mut grad_x = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let ex = cache.unit_x.row(i);
            for j in 0..k {
                let raw = cache.cos.row(i)[j];
                if raw.abs() > 1.0 - COS_CLAMP {
                    continue;
                }
                let dlogit = match &cache.labels {
                    Some(l) if l[i] == j => self.target_logit(raw).1,
                    _ => self.scale,
                };
                let dc = grad_logits.row(i)[j] * dlogit;
                if dc == 0.0 {
                    continue;
                }
                let ew = cache.unit_w.row(j);
                let (sx, sw) = (dc / cache.x_norms[i], dc / cache.w_norms[j]);
                for (t, gx) in grad_x.row_mut(i).iter_mut().enumerate() {
                    *gx += sx * (ew[t] - raw * ex[t]);
                }
                for (t, gw) in self.weight.grad.row_mut(j).iter_mut().enumerate() {
                    *gw += sw * (ex[t] - raw * ew[t]);
                }
            }
        }
        self.cache = Some(cache);
        Ok(grad_x)
    }
}

/// Unit rows and their norms; `Err(row)` on a (near) zero row.
fn normalize_rows(t: &Tensor) -> Result<(Tensor, Vec<f64>), usize> {
    let d = t.dim(1);
    let mut out = t.clone();
    let mut norms = Vec::with_capacity(t.dim(0));
    for (i, row) in out.data_mut().chunks_exact_mut(d).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= MIN_NORM) {
            return Err(i);
        }
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    Ok((out, norms))
}
