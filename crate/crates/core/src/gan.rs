//! Gaussian-versus-perturbation discriminator, used both as a training
//! regularizer for the generator and as the detectability instrument.

use crate::attack::pgm::{GeneratorModel, PgmTrainer};
use crate::attack::{AttackConfig, Perturber};
use crate::error::{Error, Result};
use crate::metrics::{f1_with_bootstrap, Estimate};
use crate::nn::io::Container;
use crate::nn::{evaluate_objective, Adam, AdamConfig, Model, ModelBuilder, Objective, Targets};
use crate::real::Real;
use crate::rng::SimRng;
use crate::systems::Victim;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Generated (and as many Gaussian) samples per discriminator update.
    pub batch_size: usize,
    /// Perturbations used to refresh the Gaussian reference each epoch.
    pub reference_samples: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            learning_rate: 1e-4,
            batch_size: 64,
            reference_samples: 512,
        }
    }
}

/// `D`: probability that a vector is a generated perturbation rather than
/// Gaussian noise at the reference `(μ, σ²)`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    model: Model<f32>,
    adam: Adam<f32>,
    mu: f64,
    sigma: f64,
}

impl Discriminator {
    pub fn new(dim: usize, cfg: &GanConfig, rng: &mut SimRng) -> Result<Self> {
        let model: Model<f32> = ModelBuilder::new(dim).dense(cfg.hidden).relu().dense(1).sigmoid().build(rng)?;
        let adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), model.params());
        Ok(Self {
            model,
            adam,
            mu: 0.0,
            sigma: 1.0,
        })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn reference(&self) -> (f64, f64) {
        (self.mu, self.sigma)
    }

    pub fn set_reference(&mut self, mu: f64, sigma: f64) {
        self.mu = mu;
        self.sigma = sigma;
    }

    /// Sets `(μ, σ)` to the average per-perturbation mean and standard deviation.
    pub fn refresh_reference(&mut self, perturbations: &Array2<f32>) {
        let n = perturbations.nrows().max(1) as f64;
        let (mut mu, mut sigma) = (0.0, 0.0);
        for row in perturbations.axis_iter(Axis(0)) {
            let m = row.iter().map(|&v| f64::from(v)).sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / row.len() as f64;
            mu += m;
            sigma += var.sqrt();
        }
        self.mu = mu / n;
        self.sigma = sigma / n;
    }

    /// i.i.d. `N(μ, σ²)` vectors.
    pub fn gaussian_batch(&self, n: usize, rng: &mut SimRng) -> Array2<f32> {
        Array2::from_shape_simple_fn((n, self.model.input_dim()), || {
            (self.mu + self.sigma * rng.sample::<f64, _>(StandardNormal)) as f32
        })
    }

    pub fn probability(&self, x: &Array2<f32>) -> Result<Vec<f32>> {
        Ok(self.model.forward(x)?.into_raw_vec_and_offset().0)
    }

    /// Binary cross-entropy of `D(c)` against the Gaussian label, with its
    /// gradient in `c`. Smaller means more Gaussian-looking.
    pub fn regularizer(&self, c: &[f32]) -> Result<(f64, Vec<f32>)> {
        let (v, g) = undetect_regularizer(&self.model, c)?;
        Ok((v.as_f64(), g))
    }

    /// One update on generated rows (label 1) against as many Gaussian rows (label 0).
    pub fn train_step(&mut self, generated: &Array2<f32>, rng: &mut SimRng) -> Result<f64> {
        let n = generated.nrows();
        let gauss = self.gaussian_batch(n, rng);
        let x = ndarray::concatenate(Axis(0), &[generated.view(), gauss.view()])
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let mut y = Array2::zeros((2 * n, 1));
        y.slice_mut(ndarray::s![..n, ..]).fill(1.0);
        let eval = evaluate_objective(&self.model, &x, &Targets::Values(y), Objective::BinaryCrossEntropy, true)?;
        self.adam.step(self.model.params_mut(), eval.param_grads.as_ref().expect("requested"))?;
        Ok(f64::from(eval.loss))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Container::from_model(&self.model, "disc", json!({ "mu": self.mu, "sigma": self.sigma })).write(path)
    }

    pub fn load(path: impl AsRef<Path>, cfg: &GanConfig) -> Result<Self> {
        let c = Container::read(path)?;
        c.expect_tag("disc")?;
        let model = c.to_model()?;
        let adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), model.params());
        Ok(Self {
            mu: c.header.meta["mu"].as_f64().unwrap_or(0.0),
            sigma: c.header.meta["sigma"].as_f64().unwrap_or(1.0),
            model,
            adam,
        })
    }
}

/// `BCE(D(c), 0) = ln(1 + e^{logit})` and its gradient with respect to `c`.
pub fn undetect_regularizer<T: Real>(disc: &Model<T>, c: &[T]) -> Result<(T, Vec<T>)> {
    if c.len() != disc.input_dim() {
        return Err(Error::LengthMismatch {
            expected: disc.input_dim(),
            actual: c.len(),
        });
    }
    let x = Array2::from_shape_vec((1, c.len()), c.to_vec()).expect("row shape");
    let eval = evaluate_objective(disc, &x, &Targets::Values(Array2::zeros((1, 1))), Objective::BinaryCrossEntropy, false)?;
    Ok((eval.loss, eval.input_grad.into_raw_vec_and_offset().0))
}

/// f1 of the perturbation class at threshold 0.5 over `n/2` generated and
/// `n/2` reference-Gaussian vectors, with a bootstrap interval.
pub fn discriminator_f1(disc: &Discriminator, attack: &dyn Perturber, n: usize, rng: &mut SimRng) -> Result<Estimate> {
    let half = n / 2;
    let generated = attack.sample_batch(half, rng)?;
    let gauss = disc.gaussian_batch(half, rng);
    let mut pairs = Vec::with_capacity(2 * half);
    for (label, batch) in [(true, &generated), (false, &gauss)] {
        for p in disc.probability(batch)? {
            pairs.push((label, p > 0.5));
        }
    }
    Ok(f1_with_bootstrap(&pairs, 200, rng))
}

/// Joint generator/discriminator training with `cfg.alpha` weighting the
/// discriminator term. One discriminator update follows every generator update.
pub fn train_joint(
    victim: &dyn Victim,
    cfg: &AttackConfig,
    gan: &GanConfig,
    rng: &mut SimRng,
) -> Result<(GeneratorModel, Discriminator)> {
    let mut trainer = PgmTrainer::new(victim, cfg, rng)?;
    let mut disc = Discriminator::new(victim.signal_len(), gan, rng)?;
    for _ in 0..cfg.epochs {
        disc.refresh_reference(&trainer.sample(gan.reference_samples, rng)?);
        for batch in trainer.epoch_batches(rng) {
            trainer.step(&batch, Some(&disc), rng)?;
            let generated = trainer.sample(gan.batch_size, rng)?;
            disc.train_step(&generated, rng)?;
        }
        if !disc.model.all_finite() {
            return Err(Error::Diverged("discriminator parameters".into()));
        }
    }
    disc.refresh_reference(&trainer.sample(gan.reference_samples, rng)?);
    Ok((trainer.finish()?, disc))
}
