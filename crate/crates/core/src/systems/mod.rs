//! Victim systems: the autoencoder link, the modulation classifier and the
//! OFDM detector, plus the substitute receivers a black-box attacker trains.
//!
//! Every system exposes the same [`Victim`] surface: it can draw batches of
//! received signals at a channel level and score receiver outputs. Batches
//! are `(n, 2N)` matrices in block I/Q layout.

pub mod autoencoder;
pub mod hamming;
pub mod modulation;
pub mod ofdm;
pub mod rmlx;
pub mod substitute;

use crate::error::{Error, Result};
use crate::metrics::{Estimate, Metric};
use crate::nn::{argmax_rows, Model, Objective, Targets};
use crate::rng::SimRng;
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

pub use autoencoder::{Autoencoder, AutoencoderConfig};
pub use modulation::{ClassifierConfig, Modulation, ModulationDataset, ModulationSystem};
pub use ofdm::{OfdmConfig, OfdmSystem};

/// Which victim a configuration refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Autoencoder,
    Modulation,
    Ofdm,
}

/// Ground truth for a batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Truth {
    Classes(Vec<usize>),
    /// One row of 0/1 values per example.
    Bits(Array2<f32>),
}

impl Truth {
    pub fn len(&self) -> usize {
        match self {
            Truth::Classes(c) => c.len(),
            Truth::Bits(b) => b.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_targets(&self) -> Targets<f32> {
        match self {
            Truth::Classes(c) => Targets::Classes(c.clone()),
            Truth::Bits(b) => Targets::Values(b.clone()),
        }
    }
}

/// A batch of received signals with what was sent.
#[derive(Clone, Debug)]
pub struct Draw {
    pub received: Array2<f32>,
    pub truth: Truth,
}

/// A trained receiver together with the channel that feeds it.
pub trait Victim: Send + Sync {
    fn scenario(&self) -> Scenario;

    /// Real length `2N` of one received signal.
    fn signal_len(&self) -> usize;

    fn receiver(&self) -> &Model<f32>;

    fn objective(&self) -> Objective;

    fn metric(&self) -> Metric;

    /// Per-real-dimension noise variance at a channel level in dB.
    fn noise_variance(&self, level_db: f64) -> Result<f64>;

    /// Draws `n` fresh transmissions received at `level_db`.
    fn draw(&self, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Draw>;

    /// Average received signal power per complex sample.
    fn signal_power(&self) -> f64 {
        1.0
    }
}

/// A victim whose receiver has been replaced, for example by a hardened or
/// substitute model. The channel and data are unchanged.
pub struct WithReceiver<'a> {
    base: &'a dyn Victim,
    model: Model<f32>,
}

impl<'a> WithReceiver<'a> {
    pub fn new(base: &'a dyn Victim, model: Model<f32>) -> Result<Self> {
        if model.input_dim() != base.signal_len() {
            return Err(Error::ShapeMismatch(format!(
                "receiver input {} vs signal length {}",
                model.input_dim(),
                base.signal_len()
            )));
        }
        if model.output_dim() != base.receiver().output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "receiver output {} vs {}",
                model.output_dim(),
                base.receiver().output_dim()
            )));
        }
        Ok(Self { base, model })
    }

    pub fn into_model(self) -> Model<f32> {
        self.model
    }
}

impl Victim for WithReceiver<'_> {
    fn scenario(&self) -> Scenario {
        self.base.scenario()
    }
    fn signal_len(&self) -> usize {
        self.base.signal_len()
    }
    fn receiver(&self) -> &Model<f32> {
        &self.model
    }
    fn objective(&self) -> Objective {
        self.base.objective()
    }
    fn metric(&self) -> Metric {
        self.base.metric()
    }
    fn noise_variance(&self, level_db: f64) -> Result<f64> {
        self.base.noise_variance(level_db)
    }
    fn draw(&self, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Draw> {
        self.base.draw(level_db, n, rng)
    }
    fn signal_power(&self) -> f64 {
        self.base.signal_power()
    }
}

/// Hard decisions of a bit detector.
pub fn threshold_bits(outputs: &Array2<f32>) -> Array2<f32> {
    outputs.mapv(|v| if v > 0.5 { 1.0 } else { 0.0 })
}

/// Counts `(events, trials)` of `metric` for receiver outputs.
pub fn score(metric: Metric, outputs: &Array2<f32>, truth: &Truth) -> Result<(u64, u64)> {
    if outputs.nrows() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: outputs.nrows(),
        });
    }
    match (metric, truth) {
        (Metric::Bler, Truth::Classes(labels)) | (Metric::Accuracy, Truth::Classes(labels)) => {
            let correct = argmax_rows(outputs)
                .iter()
                .zip(labels)
                .filter(|(p, l)| p == l)
                .count() as u64;
            let n = labels.len() as u64;
            Ok(if metric == Metric::Bler { (n - correct, n) } else { (correct, n) })
        }
        (Metric::Ber, Truth::Bits(bits)) => {
            if bits.dim() != outputs.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "detector output {:?} vs bits {:?}",
                    outputs.dim(),
                    bits.dim()
                )));
            }
            let mut errors = 0u64;
            Zip::from(outputs).and(bits).for_each(|&o, &b| {
                if (o > 0.5) != (b > 0.5) {
                    errors += 1;
                }
            });
            Ok((errors, bits.len() as u64))
        }
        _ => Err(Error::invalid(format!("metric {metric:?} does not fit the truth kind"))),
    }
}

/// Clean metric of a victim over `n` transmissions at `level_db`.
pub fn clean_estimate(victim: &dyn Victim, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Estimate> {
    let mut events = 0;
    let mut trials = 0;
    let mut left = n;
    while left > 0 {
        let b = left.min(4096);
        let d = victim.draw(level_db, b, rng)?;
        let out = victim.receiver().forward(&d.received)?;
        let (e, t) = score(victim.metric(), &out, &d.truth)?;
        events += e;
        trials += t;
        left -= b;
    }
    Ok(Estimate::wilson(events, trials))
}

/// Targets an untargeted attack pushes away from: the receiver's own clean
/// decisions (argmax classes, or thresholded bits).
pub fn clean_prediction_targets(victim: &dyn Victim, clean_outputs: &Array2<f32>) -> Targets<f32> {
    match victim.objective() {
        Objective::CrossEntropy => Targets::Classes(argmax_rows(clean_outputs)),
        _ => Targets::Values(threshold_bits(clean_outputs)),
    }
}
