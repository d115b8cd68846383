//! Single-vector universal perturbation: gradient ascent on one `δ`,
//! projected back onto the budget ball after every step.

use super::{clip_to_budget, fingerprint, loss_and_perturbation_grad, training_thetas, AttackConfig, AttackData, Perturber};
use crate::error::{Error, Result};
use crate::nn::io::Container;
use crate::nn::{Adam, AdamConfig};
use crate::rng::SimRng;
use crate::signal::IqSignal;
use crate::systems::Victim;
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde_json::json;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct SingleUap {
    delta: Vec<f32>,
    budget: f64,
}

impl SingleUap {
    /// Wraps `delta`, clipping it to the budget.
    pub fn new(mut delta: Vec<f32>, budget: f64) -> Result<Self> {
        if !(budget >= 0.0) || delta.is_empty() || delta.len() % 2 != 0 {
            return Err(Error::invalid("uap needs an even-length vector and a non-negative budget"));
        }
        if budget == 0.0 {
            delta.iter_mut().for_each(|v| *v = 0.0);
        } else {
            clip_to_budget(&mut delta, budget);
        }
        Ok(Self { delta, budget })
    }

    pub fn delta(&self) -> &[f32] {
        &self.delta
    }

    pub fn as_signal(&self) -> IqSignal {
        IqSignal::new(self.delta.iter().map(|&v| f64::from(v)).collect()).expect("finite perturbation")
    }

    pub fn save(&self, path: impl AsRef<Path>, config: &AttackConfig) -> Result<()> {
        Container::new(
            "uap",
            self.delta.len(),
            Vec::new(),
            vec![("delta".into(), vec![self.delta.len()], self.delta.clone())],
            json!({ "budget": self.budget, "config": config }),
        )
        .write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, AttackConfig)> {
        let c = Container::read(path)?;
        c.expect_tag("uap")?;
        let budget = c.header.meta["budget"]
            .as_f64()
            .ok_or_else(|| Error::Truncated("uap budget missing".into()))?;
        let config = serde_json::from_value(c.header.meta["config"].clone())?;
        let delta = c.tensors.into_iter().next().ok_or_else(|| Error::Truncated("uap tensor".into()))?;
        Ok((Self::new(delta, budget)?, config))
    }
}

impl Perturber for SingleUap {
    fn dim(&self) -> usize {
        self.delta.len()
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn sample_batch(&self, n: usize, _rng: &mut SimRng) -> Result<Array2<f32>> {
        Ok(Array2::from_shape_fn((n, self.delta.len()), |(_, j)| self.delta[j]))
    }
}

/// Trains a single perturbation against a frozen victim.
pub fn train_single_uap(victim: &dyn Victim, cfg: &AttackConfig, rng: &mut SimRng) -> Result<SingleUap> {
    cfg.validate()?;
    let data = AttackData::draw(victim, cfg, rng)?;
    train_single_uap_on(victim, cfg, &data, rng)
}

/// As [`train_single_uap`] on a given input set.
pub fn train_single_uap_on(victim: &dyn Victim, cfg: &AttackConfig, data: &AttackData, rng: &mut SimRng) -> Result<SingleUap> {
    let budget = cfg.budget(victim)?;
    let dim = victim.signal_len();
    let print = fingerprint(victim.receiver());
    // Start at zero so the first step follows the mean loss gradient.
    let mut delta = vec![0.0f32; dim];
    let mut adam = Adam::<f32>::for_lengths(AdamConfig::with_lr(cfg.uap_learning_rate), [dim]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.x.select(ndarray::Axis(0), batch);
            let tb = data.targets.select(batch);
            let thetas = training_thetas(cfg.phase_policy, batch.len(), rng);
            let (_, g) = loss_and_perturbation_grad(victim.receiver(), victim.objective(), &xb, &tb, &delta, &thetas)?;
            let ascent: Vec<f32> = g.iter().map(|v| -v).collect();
            adam.step_slices(&mut [&mut delta[..]], &[&ascent[..]])?;
            clip_to_budget(&mut delta, budget);
        }
    }
    if fingerprint(victim.receiver()) != print {
        return Err(Error::invalid("victim receiver changed during attack training"));
    }
    SingleUap::new(delta, budget)
}
