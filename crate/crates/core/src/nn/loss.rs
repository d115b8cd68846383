//! Losses. Each returns the batch-mean value and its gradient with respect
//! to the model output it consumes.

use crate::error::{Error, Result};
use crate::real::Real;
use ndarray::{Array2, ArrayView1, Axis};

fn log_sum_exp<T: Real>(row: ArrayView1<'_, T>) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Cross-entropy of a single logit row against `label`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(ArrayView1::from(logits)) - logits[label])
}

/// Mean softmax cross-entropy over the batch, with gradient w.r.t. logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Array2<T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    if labels.len() != logits.nrows() {
        return Err(Error::LengthMismatch {
            expected: logits.nrows(),
            actual: labels.len(),
        });
    }
    let classes = logits.ncols();
    let inv_b = T::one() / T::lit(logits.nrows().max(1) as f64);
    let mut grad = logits.clone();
    let mut total = T::zero();
    for ((mut g, row), &label) in grad.axis_iter_mut(Axis(0)).zip(logits.axis_iter(Axis(0))).zip(labels) {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let lse = log_sum_exp(row);
        total += lse - row[label];
        g.mapv_inplace(|v| (v - lse).exp() * inv_b);
        g[label] -= inv_b;
    }
    Ok((total * inv_b, grad))
}

/// Mean squared error over all elements.
pub fn mse<T: Real>(pred: &Array2<T>, target: &Array2<T>) -> Result<(T, Array2<T>)> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "mse prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = T::lit(pred.len().max(1) as f64);
    let diff = pred - target;
    let loss = diff.iter().map(|d| *d * *d).sum::<T>() / n;
    let grad = diff.mapv(|d| d * T::lit(2.0) / n);
    Ok((loss, grad))
}

/// Mean binary cross-entropy of sigmoid(logits) against `targets` in [0, 1].
pub fn bce_with_logits<T: Real>(logits: &Array2<T>, targets: &[T]) -> Result<(T, Array2<T>)> {
    if logits.ncols() != 1 || logits.nrows() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "bce expects ({}, 1) logits, got {:?}",
            targets.len(),
            logits.dim()
        )));
    }
    let inv_b = T::one() / T::lit(targets.len().max(1) as f64);
    let mut grad = logits.clone();
    let mut total = T::zero();
    for (g, &t) in grad.iter_mut().zip(targets) {
        let z = *g;
        // max(z,0) - z t + ln(1 + e^{-|z|})
        total += z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
        *g = (super::layer::sigmoid(z) - t) * inv_b;
    }
    Ok((total * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_m() {
        let l = cross_entropy(&[0.3f64; 16], 5).unwrap();
        assert!((l - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits() {
        let l = cross_entropy(&[10.0f64, -10.0], 0).unwrap();
        // ln(1 + e^{-20})
        assert!((l - (-20f64).exp().ln_1p()).abs() < 1e-14);
        assert!((l - 2.061e-9).abs() < 1e-11, "{l}");
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.0f32, 1.0], 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(softmax_cross_entropy(&array![[0.0f32, 1.0]], &[3]).is_err());
    }

    #[test]
    fn mse_of_equal_is_zero() {
        let a = array![[1.0f64, 2.0], [3.0, -4.0]];
        let (l, g) = mse(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(mse(&a, &array![[1.0]]).is_err());
    }

    #[test]
    fn batch_ce_matches_rowwise() {
        let logits = array![[1.0f64, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let (l, _) = softmax_cross_entropy(&logits, &[1, 2]).unwrap();
        let expect = (cross_entropy(logits.row(0).as_slice().unwrap(), 1).unwrap()
            + cross_entropy(logits.row(1).as_slice().unwrap(), 2).unwrap())
            / 2.0;
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let (l, _) = bce_with_logits(&array![[0.0f64]], &[0.0]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }
}
