//! Per-sample training objectives with analytic gradients w.r.t. logits.
//!
//! * softmax cross-entropy,
//! * generalized cross-entropy `(1 - p_y^q) / q` for the biased branch,
//! * logit-corrected cross-entropy, which adds `ln P̂(c, a_x)` to every
//!   logit `c` before the softmax,
//! * cross-entropy scaled by a per-sample group weight.

use thiserror::Error;

use crate::numerics::{log_sum_exp, softmax, NumericsError};
use crate::scalar::Scalar;

/// Floor applied to prior entries before taking logs.
pub const PRIOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("GCE exponent q must lie in [0, 1), got {0}")]
    BadExponent(f64),
    #[error("probability of the target class must be positive, got {0}")]
    ZeroTargetProbability(f64),
    #[error("sample weight must be positive, got {0}")]
    BadWeight(f64),
    #[error("correction row has {actual} offsets for {expected} classes")]
    RowLength { expected: usize, actual: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Loss value and its gradient w.r.t. the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

fn check_target(classes: usize, y: usize) -> Result<(), LossError> {
    if classes < 2 {
        return Err(LossError::TooFewClasses(classes));
    }
    if y >= classes {
        return Err(LossError::ClassOutOfRange { index: y, classes });
    }
    Ok(())
}

pub fn ce_loss<T: Scalar>(logits: &[T], y: usize) -> Result<LossGrad<T>, LossError> {
    check_target(logits.len(), y)?;
    let loss = log_sum_exp(logits)? - logits[y];
    let mut grad = softmax(logits)?;
    grad[y] -= T::one();
    Ok(LossGrad { loss, grad })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GceConfig {
    q: f64,
}

impl GceConfig {
    pub fn new(q: f64) -> Result<Self, LossError> {
        if !(0.0..1.0).contains(&q) {
            return Err(LossError::BadExponent(q));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

impl Default for GceConfig {
    fn default() -> Self {
        Self { q: 0.7 }
    }
}

/// Generalized cross-entropy of softmax probabilities.
///
/// The gradient is w.r.t. the logits that produced `probs`; it is the CE
/// gradient scaled by `p_y^q`. At `q = 0` the loss is `-ln p_y`.
pub fn gce_loss<T: Scalar>(probs: &[T], y: usize, cfg: GceConfig) -> Result<LossGrad<T>, LossError> {
    check_target(probs.len(), y)?;
    let p_y = probs[y];
    if !(p_y > T::zero()) {
        return Err(LossError::ZeroTargetProbability(p_y.as_f64()));
    }
    let q = T::of(cfg.q);
    let (loss, scale) = if cfg.q == 0.0 {
        (-p_y.ln(), T::one())
    } else {
        let pq = p_y.powf(q);
        ((T::one() - pq) / q, pq)
    };
    let grad = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| scale * if c == y { p - T::one() } else { p })
        .collect();
    Ok(LossGrad { loss, grad })
}

pub fn gce_loss_from_logits<T: Scalar>(
    logits: &[T],
    y: usize,
    cfg: GceConfig,
) -> Result<LossGrad<T>, LossError> {
    check_target(logits.len(), y)?;
    if cfg.q == 0.0 {
        return ce_loss(logits, y);
    }
    // p_y^q through ln p_y, so an underflowed p_y gives loss 1/q and zero gradient.
    let log_p_y = logits[y] - log_sum_exp(logits)?;
    let q = T::of(cfg.q);
    let pq = (q * log_p_y).exp();
    let probs = softmax(logits)?;
    let grad = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| pq * if c == y { p - T::one() } else { p })
        .collect();
    Ok(LossGrad {
        loss: (T::one() - pq) / q,
        grad,
    })
}

/// Per-class additive offsets `ln max(P̂(c, a_x), floor)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionRow<T> {
    offsets: Vec<T>,
    floor: f64,
}

impl<T: Scalar> CorrectionRow<T> {
    /// Builds offsets from prior entries `P̂(c, a_x)` for every class `c`.
    pub fn from_priors(priors: &[T], floor: f64) -> Self {
        let fl = T::of(floor);
        Self {
            offsets: priors.iter().map(|&p| p.max(fl).ln()).collect(),
            floor,
        }
    }

    pub fn from_priors_default(priors: &[T]) -> Self {
        Self::from_priors(priors, PRIOR_FLOOR)
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Cross-entropy on `logits + offsets`.
pub fn lc_loss<T: Scalar>(
    logits: &[T],
    y: usize,
    correction: &CorrectionRow<T>,
) -> Result<LossGrad<T>, LossError> {
    if correction.offsets.len() != logits.len() {
        return Err(LossError::RowLength {
            expected: logits.len(),
            actual: correction.offsets.len(),
        });
    }
    // Offsets are shifted by their maximum (softmax is shift invariant) so a
    // constant row leaves the logits bit-for-bit unchanged.
    let top = correction.offsets.iter().copied().fold(T::neg_infinity(), T::max);
    let corrected: Vec<T> = logits
        .iter()
        .zip(&correction.offsets)
        .map(|(&f, &o)| f + (o - top))
        .collect();
    ce_loss(&corrected, y)
}

/// The same objective written as a pairwise margin loss:
/// `ln(1 + Σ_{c≠y} exp(f_c - f_y + ln(P̂_c / P̂_y)))`.
pub fn lc_pairwise_margin_loss<T: Scalar>(
    logits: &[T],
    y: usize,
    correction: &CorrectionRow<T>,
) -> Result<T, LossError> {
    check_target(logits.len(), y)?;
    if correction.offsets.len() != logits.len() {
        return Err(LossError::RowLength {
            expected: logits.len(),
            actual: correction.offsets.len(),
        });
    }
    let o = &correction.offsets;
    let mut terms = vec![T::zero()];
    for c in (0..logits.len()).filter(|&c| c != y) {
        terms.push(logits[c] - logits[y] + (o[c] - o[y]));
    }
    Ok(log_sum_exp(&terms)?)
}

/// `weight * CE`, gradient scaled likewise.
pub fn reweighted_ce_loss<T: Scalar>(logits: &[T], y: usize, weight: T) -> Result<LossGrad<T>, LossError> {
    if !(weight > T::zero()) || !weight.is_finite() {
        return Err(LossError::BadWeight(weight.as_f64()));
    }
    let LossGrad { loss, grad } = ce_loss(logits, y)?;
    Ok(LossGrad {
        loss: weight * loss,
        grad: grad.into_iter().map(|g| g * weight).collect(),
    })
}

/// Inverse-prior weights `1 / P̂(y_i, a_i)` rescaled to mean one.
pub fn normalized_inverse_weights<T: Scalar>(group_priors: &[T], floor: f64) -> Vec<T> {
    if group_priors.is_empty() {
        return Vec::new();
    }
    let fl = T::of(floor);
    let raw: Vec<T> = group_priors.iter().map(|&p| T::one() / p.max(fl)).collect();
    let mean = raw.iter().copied().sum::<T>() / T::of(raw.len() as f64);
    raw.into_iter().map(|w| w / mean).collect()
}
