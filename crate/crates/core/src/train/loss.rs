use crate::error::{Error, Result};
use crate::nn::Scalar;

pub const PROB_CLIP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to each
/// probability. Probabilities are clipped to `[1e-7, 1 − 1e-7]` and the
/// gradient is evaluated at the clipped value.
pub fn bce_loss<T: Scalar>(probs: &[T], labels: &[u8]) -> Result<(f64, Vec<T>)> {
    if probs.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.as_f64().clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        if y != 0 {
            loss -= p.ln();
            grad.push(T::of(-1.0 / (p * n)));
        } else {
            loss -= (1.0 - p).ln();
            grad.push(T::of(1.0 / ((1.0 - p) * n)));
        }
    }
    Ok((loss / n, grad))
}
