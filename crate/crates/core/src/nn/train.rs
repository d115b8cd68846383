use super::adam::Adam;
use super::layer::Activation;
use super::loss::{bce_with_logits, mse, softmax_cross_entropy};
use super::model::{Gradients, Model};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Loss a model is trained (or attacked) under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Softmax cross-entropy; the model must end in a softmax.
    CrossEntropy,
    /// Mean squared error on the full model output.
    Mse,
    /// Binary cross-entropy; the model must end in a sigmoid with one output.
    BinaryCrossEntropy,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    Classes(Vec<usize>),
    Values(Array2<T>),
}

impl<T: Real> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select(Axis(0), rows)),
        }
    }

    /// Concatenates two target sets of the same kind.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Targets::Classes(a), Targets::Classes(b)) => {
                Ok(Targets::Classes(a.iter().chain(b).copied().collect()))
            }
            (Targets::Values(a), Targets::Values(b)) => Ok(Targets::Values(
                ndarray::concatenate(Axis(0), &[a.view(), b.view()])
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            )),
            _ => Err(Error::invalid("cannot concatenate class and value targets")),
        }
    }
}

/// Loss value and gradients of an objective at one batch.
pub struct ObjectiveEval<T> {
    pub loss: T,
    pub param_grads: Option<Gradients<T>>,
    pub input_grad: Array2<T>,
}

pub fn evaluate_objective<T: Real>(
    model: &Model<T>,
    x: &Array2<T>,
    targets: &Targets<T>,
    objective: Objective,
    want_param_grads: bool,
) -> Result<ObjectiveEval<T>> {
    let (tape, loss, grad) = match (objective, targets) {
        (Objective::CrossEntropy, Targets::Classes(labels)) => {
            if model.head() != Some(Activation::Softmax) {
                return Err(Error::invalid("cross-entropy needs a softmax head"));
            }
            let tape = model.forward_cached(x, model.body_len())?;
            let (l, g) = softmax_cross_entropy(tape.output(), labels)?;
            (tape, l, g)
        }
        (Objective::Mse, Targets::Values(values)) => {
            let tape = model.forward_cached(x, model.layers().len())?;
            let (l, g) = mse(tape.output(), values)?;
            (tape, l, g)
        }
        (Objective::BinaryCrossEntropy, Targets::Values(values)) => {
            if model.head() != Some(Activation::Sigmoid) {
                return Err(Error::invalid("binary cross-entropy needs a sigmoid head"));
            }
            let tape = model.forward_cached(x, model.body_len())?;
            let col: Vec<T> = values.iter().copied().collect();
            let (l, g) = bce_with_logits(tape.output(), &col)?;
            (tape, l, g)
        }
        _ => return Err(Error::invalid(format!("targets do not fit objective {objective:?}"))),
    };
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite {objective:?} loss")));
    }
    let (param_grads, input_grad) = model.backward(&tape, &grad, want_param_grads)?;
    Ok(ObjectiveEval {
        loss,
        param_grads,
        input_grad,
    })
}

/// One pass over `(x, targets)` in shuffled mini-batches. Returns the mean loss.
pub fn fit_epoch(
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    x: &Array2<f32>,
    targets: &Targets<f32>,
    objective: Objective,
    batch_size: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if x.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: targets.len(),
        });
    }
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let xb = x.select(Axis(0), chunk);
        let tb = targets.select(chunk);
        let eval = evaluate_objective(model, &xb, &tb, objective, true)?;
        adam.step(model.params_mut(), eval.param_grads.as_ref().unwrap())?;
        total += f64::from(eval.loss);
        batches += 1;
    }
    if !model.all_finite() {
        return Err(Error::Diverged("non-finite parameters after epoch".into()));
    }
    Ok(total / batches.max(1) as f64)
}

/// Row-wise argmax.
pub fn argmax_rows<T: Real>(y: &Array2<T>) -> Vec<usize> {
    y.axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Predicts in fixed-size chunks to bound memory.
pub fn predict(model: &Model<f32>, x: &Array2<f32>, chunk: usize) -> Result<Array2<f32>> {
    if x.nrows() <= chunk {
        return model.forward(x);
    }
    let mut parts = Vec::new();
    for start in (0..x.nrows()).step_by(chunk) {
        let end = (start + chunk).min(x.nrows());
        parts.push(model.forward(&x.slice(ndarray::s![start..end, ..]).to_owned())?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))
}
