//! Countermeasures: pilot-based perturbation estimation, perturbation
//! subtraction under three levels of defender knowledge, and adversarial
//! training of the receiver.

use crate::attack::pgm::GeneratorModel;
use crate::attack::Perturber;
use crate::error::{Error, Result};
use crate::nn::{fit_epoch, Adam, AdamConfig, Model, Targets};
use crate::rng::SimRng;
use crate::signal::{add_gaussian, rotate_in_place, IqSignal, PhasePolicy, PhaseSession};
use crate::systems::Victim;
use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Something a receiver does to its input before decoding.
pub trait Defense: Send + Sync {
    fn apply(&self, received: &mut Array2<f32>, rng: &mut SimRng) -> Result<()>;
}

/// How much the defender knows about the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeKind {
    /// Nothing; averages pilot residuals.
    AdHoc,
    /// The architecture, with parameters from its own training run.
    StructureAware,
    /// Architecture and the attacker's exact parameters.
    PerfectAware,
}

/// Defender capability plus the generator it holds, if any.
#[derive(Clone, Debug)]
pub struct DefenderKnowledge {
    pub kind: KnowledgeKind,
    pub pilot_count: usize,
    pub generator: Option<GeneratorModel>,
}

impl DefenderKnowledge {
    pub fn ad_hoc(pilot_count: usize) -> Self {
        Self {
            kind: KnowledgeKind::AdHoc,
            pilot_count,
            generator: None,
        }
    }

    /// A defender holding its own independently trained generator.
    pub fn structure_aware(pilot_count: usize, own: GeneratorModel) -> Self {
        Self {
            kind: KnowledgeKind::StructureAware,
            pilot_count,
            generator: Some(own),
        }
    }

    /// A defender holding a copy of the attacker's generator.
    pub fn perfect_aware(pilot_count: usize, attacker: &GeneratorModel) -> Self {
        Self {
            kind: KnowledgeKind::PerfectAware,
            pilot_count,
            generator: Some(attacker.clone()),
        }
    }
}

/// Mean pilot residual.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotEstimate {
    pub delta_hat: IqSignal,
    pub pilots_used: usize,
    /// Mean squared distance between the perturbations actually received
    /// and `delta_hat`.
    pub residual_power: f64,
    /// Mean squared norm of the perturbations actually received.
    pub perturbation_power: f64,
}

/// Averages `received − known pilot` over `n_pilots` transmissions.
///
/// Each residual is channel noise of `noise_variance` per real dimension
/// plus, when an attacker is present, one rotated perturbation.
pub fn estimate_via_pilots(
    attack: Option<&dyn Perturber>,
    session: &PhaseSession,
    noise_variance: f64,
    dim: usize,
    n_pilots: usize,
    rng: &mut SimRng,
) -> Result<PilotEstimate> {
    if n_pilots == 0 {
        return Err(Error::invalid("pilot estimation needs at least one pilot"));
    }
    if let Some(a) = attack {
        if a.dim() != dim {
            return Err(Error::LengthMismatch { expected: dim, actual: a.dim() });
        }
    }
    let mut perturbations = Array2::<f64>::zeros((n_pilots, dim));
    if let Some(a) = attack {
        let mut c = a.sample_batch(n_pilots, rng)?;
        for (mut row, mut src) in perturbations.axis_iter_mut(Axis(0)).zip(c.axis_iter_mut(Axis(0))) {
            let theta = session.next_theta(rng);
            let s = src.as_slice_mut().expect("row-major");
            rotate_in_place(s, theta);
            row.iter_mut().zip(s.iter()).for_each(|(d, v)| *d = f64::from(*v));
        }
    }
    let mut observed = perturbations.clone();
    add_gaussian(observed.as_slice_mut().unwrap(), noise_variance.sqrt(), rng);
    let mean = observed.mean_axis(Axis(0)).expect("non-empty");
    let residual_power = perturbations
        .axis_iter(Axis(0))
        .map(|r| r.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n_pilots as f64;
    let perturbation_power =
        perturbations.axis_iter(Axis(0)).map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n_pilots as f64;
    Ok(PilotEstimate {
        delta_hat: IqSignal::new(mean.to_vec())?,
        pilots_used: n_pilots,
        residual_power,
        perturbation_power,
    })
}

/// Subtracts one fixed estimate from every received signal.
#[derive(Clone, Debug, PartialEq)]
pub struct SubtractEstimate {
    estimate: Vec<f32>,
}

impl SubtractEstimate {
    pub fn new(estimate: &IqSignal) -> Self {
        Self {
            estimate: estimate.samples().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl Defense for SubtractEstimate {
    fn apply(&self, received: &mut Array2<f32>, _rng: &mut SimRng) -> Result<()> {
        if received.ncols() != self.estimate.len() {
            return Err(Error::LengthMismatch {
                expected: self.estimate.len(),
                actual: received.ncols(),
            });
        }
        for mut row in received.axis_iter_mut(Axis(0)) {
            row.iter_mut().zip(&self.estimate).for_each(|(y, d)| *y -= d);
        }
        Ok(())
    }
}

/// Subtracts a freshly generated perturbation, rotated by the defender's
/// phase estimate, from every received signal.
#[derive(Clone, Debug)]
pub struct SubtractGenerated {
    generator: GeneratorModel,
    theta_hat: f64,
}

impl SubtractGenerated {
    pub fn new(generator: GeneratorModel, theta_hat: f64) -> Self {
        Self { generator, theta_hat }
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }
}

impl Defense for SubtractGenerated {
    fn apply(&self, received: &mut Array2<f32>, rng: &mut SimRng) -> Result<()> {
        let mut c = self.generator.sample_batch(received.nrows(), rng)?;
        for (mut row, mut d) in received.axis_iter_mut(Axis(0)).zip(c.axis_iter_mut(Axis(0))) {
            let d = d.as_slice_mut().expect("row-major");
            rotate_in_place(d, self.theta_hat);
            row.iter_mut().zip(d.iter()).for_each(|(y, v)| *y -= v);
        }
        Ok(())
    }
}

/// Phase that best aligns the generator's mean output with a pilot estimate.
pub fn align_phase(mean_output: &[f64], delta_hat: &IqSignal) -> f64 {
    let n = delta_hat.n_complex();
    let (di, dq) = (delta_hat.in_phase(), delta_hat.quadrature());
    let (mut re, mut im) = (0.0, 0.0);
    for k in 0..n {
        let (mr, mi) = (mean_output[k], mean_output[n + k]);
        // conj(m) · δ̂
        re += mr * di[k] + mi * dq[k];
        im += mr * dq[k] - mi * di[k];
    }
    if re == 0.0 && im == 0.0 {
        0.0
    } else {
        im.atan2(re)
    }
}

/// Builds the subtraction defense a defender with `knowledge` deploys
/// against `attack`, after estimating from pilots on the live channel.
pub fn subtract_defense(
    knowledge: &DefenderKnowledge,
    attack: Option<&dyn Perturber>,
    session: &PhaseSession,
    noise_variance: f64,
    dim: usize,
    rng: &mut SimRng,
) -> Result<Box<dyn Defense>> {
    let estimate = estimate_via_pilots(attack, session, noise_variance, dim, knowledge.pilot_count, rng)?;
    match knowledge.kind {
        KnowledgeKind::AdHoc => Ok(Box::new(SubtractEstimate::new(&estimate.delta_hat))),
        KnowledgeKind::StructureAware | KnowledgeKind::PerfectAware => {
            let g = knowledge
                .generator
                .clone()
                .ok_or_else(|| Error::invalid("generator-aware defender holds no generator"))?;
            let theta_hat = if session.policy() == PhasePolicy::FixedPerSession {
                let samples = g.sample_batch(512, rng)?;
                let mean: Vec<f64> = samples.mean_axis(Axis(0)).expect("non-empty").iter().map(|&v| f64::from(v)).collect();
                align_phase(&mean, &estimate.delta_hat)
            } else {
                0.0
            };
            Ok(Box::new(SubtractGenerated::new(g, theta_hat)))
        }
    }
}

/// Where adversarial training samples come from.
pub enum AdversarialSource<'a> {
    /// No adversarial samples: plain extra clean epochs.
    Nothing,
    /// One estimated perturbation, added as received (already phase-rotated).
    Estimate(&'a IqSignal),
    /// The defender's own generator, each sample at a random phase.
    Generator(&'a GeneratorModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvTrainConfig {
    pub epochs: usize,
    pub train_examples: usize,
    pub train_level_db: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            train_examples: 8192,
            train_level_db: 7.0,
            batch_size: 128,
            learning_rate: 1e-4,
        }
    }
}

/// Retrains the victim's receiver: each epoch trains on the current set, then
/// extends it with adversarial versions of the original clean examples.
pub fn adversarial_training(
    victim: &dyn Victim,
    source: AdversarialSource<'_>,
    cfg: &AdvTrainConfig,
    rng: &mut SimRng,
) -> Result<Model<f32>> {
    if cfg.epochs == 0 || cfg.train_examples == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("adversarial training schedule is empty".into()));
    }
    let clean = victim.draw(cfg.train_level_db, cfg.train_examples, rng)?;
    let clean_targets: Targets<f32> = clean.truth.as_targets();
    let mut model = victim.receiver().clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), model.params());
    let mut x = clean.received.clone();
    let mut targets = clean_targets.clone();
    for _ in 0..cfg.epochs {
        fit_epoch(&mut model, &mut adam, &x, &targets, victim.objective(), cfg.batch_size, rng)?;
        let adv = match &source {
            AdversarialSource::Nothing => continue,
            AdversarialSource::Estimate(delta) => {
                let d: Vec<f32> = delta.samples().iter().map(|&v| v as f32).collect();
                let mut a = clean.received.clone();
                for mut row in a.axis_iter_mut(Axis(0)) {
                    row.iter_mut().zip(&d).for_each(|(y, v)| *y += v);
                }
                a
            }
            AdversarialSource::Generator(g) => {
                let mut a = clean.received.clone();
                let mut c = g.sample_batch(a.nrows(), rng)?;
                for (mut row, mut p) in a.axis_iter_mut(Axis(0)).zip(c.axis_iter_mut(Axis(0))) {
                    let p = p.as_slice_mut().expect("row-major");
                    rotate_in_place(p, rng.random::<f64>() * std::f64::consts::TAU);
                    row.iter_mut().zip(p.iter()).for_each(|(y, v)| *y += v);
                }
                a
            }
        };
        x = ndarray::concatenate(Axis(0), &[x.view(), adv.view()]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        targets = targets.concat(&clean_targets)?;
    }
    Ok(model)
}
