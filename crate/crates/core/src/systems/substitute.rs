//! Surrogate receivers a black-box attacker trains on the same task.
//!
//! Every substitute reads the same flat block-I/Q vector as the real
//! receiver; convolutional ones view it as a `1 × rows × cols` volume.

use super::{Scenario, Victim};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Model, ModelBuilder};
use crate::nn::train::evaluate_objective;
use crate::rng::SimRng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchScale {
    /// Full-size layer widths.
    Full,
    /// Narrower layers for single-core runs.
    #[default]
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubstituteConfig {
    pub scale: ArchScale,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Channel levels training batches cycle through.
    pub train_levels_db: Vec<f64>,
}

impl Default for SubstituteConfig {
    fn default() -> Self {
        Self {
            scale: ArchScale::Desk,
            steps: 3000,
            batch_size: 128,
            learning_rate: 1e-3,
            train_levels_db: vec![7.0],
        }
    }
}

impl SubstituteConfig {
    /// Single-core settings per scenario.
    pub fn desk(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Autoencoder => Self::default(),
            Scenario::Modulation => Self {
                steps: 4000,
                train_levels_db: vec![0.0, 4.0, 8.0, 10.0, 12.0, 16.0],
                ..Self::default()
            },
            Scenario::Ofdm => Self {
                steps: 3000,
                train_levels_db: vec![10.0, 15.0, 20.0, 25.0],
                ..Self::default()
            },
        }
    }
}

/// Substitute architecture for a victim's input and output sizes.
pub fn substitute_layers(scenario: Scenario, signal_len: usize, outputs: usize, scale: ArchScale) -> ModelBuilder {
    let full = scale == ArchScale::Full;
    match scenario {
        Scenario::Autoencoder => ModelBuilder::new(signal_len)
            .volume(1, 2, signal_len / 2)
            .conv2d(16, [2, 3], [1, 1], [1, 1])
            .relu()
            .conv2d(8, [2, 3], [1, 1], [0, 1])
            .relu()
            .dense(32)
            .dense(outputs)
            .softmax(),
        Scenario::Modulation => {
            let widths: &[usize] = if full { &[1024, 1024, 512, 128] } else { &[256, 256, 128, 64] };
            let mut b = ModelBuilder::new(signal_len);
            for &w in widths {
                b = b.dense(w).relu();
            }
            b.dense(outputs).softmax()
        }
        Scenario::Ofdm => {
            let (c1, c2, dense): (usize, usize, &[usize]) =
                if full { (32, 64, &[500, 250, 120]) } else { (8, 16, &[250, 120]) };
            let mut b = ModelBuilder::new(signal_len)
                .volume(1, 4, signal_len / 4)
                .conv2d(c1, [2, 8], [2, 1], [0, 1])
                .relu()
                .conv2d(c2, [2, 8], [1, 1], [0, 1])
                .relu();
            for &w in dense {
                b = b.dense(w).relu();
            }
            b.dense(outputs).sigmoid()
        }
    }
}

/// Trains a substitute receiver on fresh ground-truth batches from `victim`'s channel.
pub fn train_substitute(victim: &dyn Victim, cfg: &SubstituteConfig, rng: &mut SimRng) -> Result<Model<f32>> {
    if cfg.steps == 0 || cfg.batch_size == 0 || cfg.train_levels_db.is_empty() {
        return Err(Error::Config("substitute training needs steps, batch size and levels".into()));
    }
    let mut model: Model<f32> = substitute_layers(
        victim.scenario(),
        victim.signal_len(),
        victim.receiver().output_dim(),
        cfg.scale,
    )
    .build(rng)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), model.params());
    for step in 0..cfg.steps {
        let level = cfg.train_levels_db[step % cfg.train_levels_db.len()];
        let d = victim.draw(level, cfg.batch_size, rng)?;
        let eval = evaluate_objective(&model, &d.received, &d.truth.as_targets(), victim.objective(), true)?;
        adam.step(model.params_mut(), eval.param_grads.as_ref().unwrap())?;
    }
    if !model.all_finite() {
        return Err(Error::Diverged("substitute parameters".into()));
    }
    Ok(model)
}
