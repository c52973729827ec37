use alloc::format;
use alloc::vec::Vec;

use super::sigmoid;
use crate::{Error, Matrix, Result, Scalar};

/// Probability clamp applied by [`cross_entropy_loss`].
pub const CE_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy between a target in `[0,1]` and a prediction,
/// averaged over every entry. Predictions are clamped to `[ε, 1-ε]`.
pub fn cross_entropy_loss<T: Scalar>(target: &Matrix<T>, prediction: &Matrix<T>) -> Result<T> {
    target.ensure_same_shape(prediction, "cross entropy")?;
    let eps = T::lit(CE_EPSILON);
    let one = T::one();
    let mut acc = T::zero();
    for (&t, &p) in target.as_slice().iter().zip(prediction.as_slice()) {
        let p = p.max(eps).min(one - eps);
        acc = acc - (t * p.ln() + (one - t) * (one - p).ln());
    }
    Ok(acc / count(target))
}

/// Numerically stable binary cross-entropy on logits. Returns the mean loss
/// and its gradient w.r.t. the logits.
pub fn sigmoid_cross_entropy_with_logits<T: Scalar>(
    target: &Matrix<T>,
    logits: &Matrix<T>,
) -> Result<(T, Matrix<T>)> {
    target.ensure_same_shape(logits, "cross entropy")?;
    let n = count(target);
    let mut acc = T::zero();
    let mut grad = Vec::with_capacity(logits.as_slice().len());
    for (&t, &z) in target.as_slice().iter().zip(logits.as_slice()) {
        acc = acc + z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln();
        grad.push((sigmoid(z) - t) / n);
    }
    Ok((acc / n, Matrix::new(logits.rows(), logits.cols(), grad)?))
}

/// Squared distance divided by the dimension count, averaged over rows.
pub fn squared_error<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    a.ensure_same_shape(b, "squared error")?;
    let mut acc = T::zero();
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = x - y;
        acc = acc + d * d;
    }
    Ok(acc / count(a))
}

/// Per-row squared distance divided by the dimension count.
pub fn squared_error_rows<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Vec<T>> {
    a.ensure_same_shape(b, "squared error")?;
    let d = T::from_usize(a.cols().max(1)).expect("count");
    Ok(a.row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| (p - q) * (p - q))
                .fold(T::zero(), |s, v| s + v)
                / d
        })
        .collect())
}

/// [`squared_error`] and its gradient w.r.t. `prediction`.
pub fn squared_error_with_grad<T: Scalar>(
    target: &Matrix<T>,
    prediction: &Matrix<T>,
) -> Result<(T, Matrix<T>)> {
    let loss = squared_error(target, prediction)?;
    let scale = T::lit(2.0) / count(target);
    let grad = prediction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Ok((loss, Matrix::new(target.rows(), target.cols(), grad)?))
}

/// Row-wise softmax of `logits / temperature`.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>, temperature: T) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = ((*v - max) / temperature).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Row-wise log-softmax of `logits / temperature`.
pub fn log_softmax_rows<T: Scalar>(logits: &Matrix<T>, temperature: T) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row
            .iter()
            .map(|&v| ((v - max) / temperature).exp())
            .fold(T::zero(), |s, v| s + v)
            .ln();
        for v in row.iter_mut() {
            *v = (*v - max) / temperature - lse;
        }
    }
    out
}

/// Mean softmax cross-entropy against integer labels, with the logit gradient.
pub fn softmax_cross_entropy<T: Scalar>(
    labels: &[usize],
    logits: &Matrix<T>,
) -> Result<(T, Matrix<T>)> {
    if labels.len() != logits.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::Parameter(format!(
            "label {bad} outside {} classes",
            logits.cols()
        )));
    }
    let n = T::from_usize(labels.len().max(1)).expect("count");
    let logp = log_softmax_rows(logits, T::one());
    let mut grad = logp.map(|v| v.exp() / n);
    let mut loss = T::zero();
    for (r, &l) in labels.iter().enumerate() {
        loss = loss - logp.get(r, l);
        let g = grad.get(r, l);
        grad.set(r, l, g - T::one() / n);
    }
    Ok((loss / n, grad))
}

/// Cross-entropy between the fixed soft target `softmax(old/T)` and
/// `softmax(new/T)`, averaged over rows.
pub fn distillation_loss<T: Scalar>(
    old_logits: &Matrix<T>,
    new_logits: &Matrix<T>,
    temperature: T,
) -> Result<T> {
    check_temperature(temperature)?;
    old_logits.ensure_same_shape(new_logits, "distillation")?;
    let target = softmax_rows(old_logits, temperature);
    Ok(distillation_with_grad(&target, new_logits, temperature)?.0)
}

/// Distillation loss against precomputed soft targets and its gradient
/// w.r.t. the (unscaled) new logits.
pub fn distillation_with_grad<T: Scalar>(
    target_probs: &Matrix<T>,
    new_logits: &Matrix<T>,
    temperature: T,
) -> Result<(T, Matrix<T>)> {
    check_temperature(temperature)?;
    target_probs.ensure_same_shape(new_logits, "distillation")?;
    let n = T::from_usize(new_logits.rows().max(1)).expect("count");
    let logq = log_softmax_rows(new_logits, temperature);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logq.as_slice().len());
    for (&t, &lq) in target_probs.as_slice().iter().zip(logq.as_slice()) {
        loss = loss - t * lq;
        grad.push((lq.exp() - t) / (temperature * n));
    }
    Ok((
        loss / n,
        Matrix::new(new_logits.rows(), new_logits.cols(), grad)?,
    ))
}

fn check_temperature<T: Scalar>(temperature: T) -> Result<()> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature:?}"
        )));
    }
    Ok(())
}

fn count<T: Scalar>(m: &Matrix<T>) -> T {
    T::from_usize(m.as_slice().len().max(1)).expect("count")
}
