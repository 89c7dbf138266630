//! Categorical cross-entropy over per-pixel class targets.

use super::layers::softmax_channels;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

fn check_targets<T: Real>(t: &Tensor<T>, targets: &[u8]) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = t.dims4()?;
    if targets.len() != n * h * w {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} pixels",
            targets.len(),
            n * h * w
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&v| v as usize >= c) {
        return Err(Error::ShapeMismatch(format!("target class {bad} with {c} channels")));
    }
    Ok((n, c, h * w))
}

/// Mean over pixels of `-log p[target]`, with probabilities clipped to
/// `[1e-12, 1]`. `targets` holds one class index per pixel in `(n, h, w)` order.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, targets: &[u8]) -> Result<T> {
    let (n, c, plane) = check_targets(probs, targets)?;
    let p = probs.data();
    let floor = T::lit(PROB_FLOOR);
    let mut total = T::zero();
    for b in 0..n {
        for i in 0..plane {
            let cls = targets[b * plane + i] as usize;
            let v = p[(b * c + cls) * plane + i].max(floor).min(T::one());
            total = total - v.ln();
        }
    }
    Ok(total / T::lit((n * plane) as f64))
}

/// Softmax followed by cross-entropy. Returns the loss, the gradient w.r.t.
/// the logits, `(p - a) / pixel_count`, and the probabilities.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[u8]) -> Result<(T, Tensor<T>, Tensor<T>)> {
    let (n, c, plane) = check_targets(logits, targets)?;
    let probs = softmax_channels(logits)?;
    let loss = cross_entropy(&probs, targets)?;
    let scale = T::one() / T::lit((n * plane) as f64);
    let mut grad = probs.clone();
    let g = grad.data_mut();
    for b in 0..n {
        for i in 0..plane {
            let cls = targets[b * plane + i] as usize;
            let at = (b * c + cls) * plane + i;
            g[at] = g[at] - T::one();
        }
    }
    for v in g.iter_mut() {
        *v = *v * scale;
    }
    Ok((loss, grad, probs))
}
