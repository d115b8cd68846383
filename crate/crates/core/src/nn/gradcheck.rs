//! Central finite-difference gradient verification (run in `f64`).

use super::model::Model;
use crate::error::Result;
use ndarray::Array2;

/// Relative error with a small absolute floor so exact zeros compare cleanly.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of a scalar function of a flat vector.
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error {
            self.max_rel_error = e;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", what());
        }
    }

    /// Compares an analytic gradient vector against finite differences.
    pub fn compare(label: &str, analytic: &[f64], numeric: &[f64]) -> Self {
        let mut r = Self::default();
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            r.record(|| format!("{label}[{i}]"), *a, *n);
        }
        r
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self
    }
}

/// Checks parameter and input gradients of `loss(model(input))`.
///
/// `loss` returns the scalar loss and its gradient with respect to the model
/// output; only its value is used on the finite-difference side.
pub fn check_model<F>(model: &Model<f64>, input: &Array2<f64>, loss: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
{
    let n = model.layers().len();
    let tape = model.forward_cached(input, n)?;
    let (_, gout) = loss(tape.output())?;
    let (grads, gin) = model.backward(&tape, &gout, true)?;
    let grads = grads.expect("requested");

    let value = |m: &Model<f64>, x: &Array2<f64>| -> f64 {
        let y = m.forward(x).expect("forward");
        loss(&y).expect("loss").0
    };

    let mut report = GradCheckReport::default();
    let mut probe = model.clone();
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.params()[pi].data[k];
            probe.params_mut()[pi].data[k] = orig + eps;
            let up = value(&probe, input);
            probe.params_mut()[pi].data[k] = orig - eps;
            let down = value(&probe, input);
            probe.params_mut()[pi].data[k] = orig;
            let name = &model.params()[pi].name;
            report.record(|| format!("{name}[{k}]"), g[k], (up - down) / (2.0 * eps));
        }
    }
    let mut x = input.clone();
    for idx in 0..x.len() {
        let orig = x.as_slice().unwrap()[idx];
        x.as_slice_mut().unwrap()[idx] = orig + eps;
        let up = value(model, &x);
        x.as_slice_mut().unwrap()[idx] = orig - eps;
        let down = value(model, &x);
        x.as_slice_mut().unwrap()[idx] = orig;
        report.record(|| format!("input[{idx}]"), gin.as_slice().unwrap()[idx], (up - down) / (2.0 * eps));
    }
    Ok(report)
}
