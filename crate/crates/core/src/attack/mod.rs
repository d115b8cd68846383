//! Universal perturbation attacks.
//!
//! A [`Perturber`] hands out power-clipped, unrotated perturbations; the
//! channel phase is applied when a perturbation is added to a received
//! signal. Implementations: the generator network ([`pgm::GeneratorModel`]),
//! the single-vector baseline ([`uap::SingleUap`]), a defender's pilot
//! estimate and an equal-power Gaussian jammer.

pub mod pgm;
pub mod uap;

use crate::error::{Error, Result};
use crate::nn::{Model, Objective, Targets};
use crate::real::Real;
use crate::rng::SimRng;
use crate::signal::{psr_to_power_budget, rotate_in_place, IqSignal, PhasePolicy, PhaseSession};
use crate::systems::{clean_prediction_targets, Scenario, Victim};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use pgm::{train_pgm, GeneratorModel, PgmTrainer};
pub use uap::{train_single_uap, train_single_uap_on, SingleUap};

/// Source of perturbations for one transmission at a time.
pub trait Perturber: Send + Sync {
    /// Real length of one perturbation.
    fn dim(&self) -> usize;

    /// Total squared-norm budget `p`.
    fn budget(&self) -> f64;

    /// `n` perturbations, one per row, before any phase rotation.
    fn sample_batch(&self, n: usize, rng: &mut SimRng) -> Result<Array2<f32>>;
}

/// Componentwise uniform `[0, 1)` trigger.
pub fn sample_trigger(dim: usize, rng: &mut SimRng) -> Vec<f32> {
    (0..dim).map(|_| rng.random::<f32>()).collect()
}

/// Scales `v` in place onto the ball of squared radius `p` when it lies
/// outside. Returns the scale factor applied; the zero vector is left alone.
pub fn clip_to_budget<T: Real>(v: &mut [T], p: f64) -> f64 {
    let norm = v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
    if norm * norm > p && norm > 0.0 {
        // Shave two ulps so rounding of the stored values cannot exceed the budget.
        let k = p.sqrt() / norm * (1.0 - 2.0 * T::epsilon().as_f64());
        v.iter_mut().for_each(|x| *x *= T::lit(k));
        k
    } else {
        1.0
    }
}

/// Vector-Jacobian product of [`clip_to_budget`] at the unclipped `g`.
///
/// Inside the ball the map is the identity; outside it is
/// `(√p/‖g‖)(I − ĝĝᵀ)`.
pub fn clip_backward<T: Real>(g: &[T], upstream: &[T], p: f64) -> Vec<T> {
    let norm_sq: f64 = g.iter().map(|x| x.as_f64() * x.as_f64()).sum();
    if norm_sq <= p || norm_sq == 0.0 {
        return upstream.to_vec();
    }
    let norm = norm_sq.sqrt();
    let dot: f64 = g.iter().zip(upstream).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
    let k = p.sqrt() / norm;
    g.iter()
        .zip(upstream)
        .map(|(a, b)| T::lit(k * (b.as_f64() - a.as_f64() * dot / norm_sq)))
        .collect()
}

/// Adds the budget-respecting version of `delta` to `y`.
pub fn remap(y: &IqSignal, delta: &IqSignal, p: f64) -> Result<IqSignal> {
    if y.len() != delta.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: delta.len(),
        });
    }
    if !(p > 0.0) {
        return Err(Error::invalid(format!("power budget {p} must be positive")));
    }
    let mut d = delta.samples().to_vec();
    clip_to_budget(&mut d, p);
    y.add(&IqSignal::new(d)?)
}

/// Adds one rotated perturbation per row of `received`.
pub fn perturb_batch(
    received: &mut Array2<f32>,
    attack: &dyn Perturber,
    session: &PhaseSession,
    rng: &mut SimRng,
) -> Result<()> {
    if received.ncols() != attack.dim() {
        return Err(Error::LengthMismatch {
            expected: received.ncols(),
            actual: attack.dim(),
        });
    }
    let mut c = attack.sample_batch(received.nrows(), rng)?;
    for (mut row, mut d) in received.axis_iter_mut(Axis(0)).zip(c.axis_iter_mut(Axis(0))) {
        let theta = session.next_theta(rng);
        let d = d.as_slice_mut().expect("row-major perturbations");
        if theta != 0.0 {
            rotate_in_place(d, theta);
        }
        row.iter_mut().zip(d.iter()).for_each(|(y, v)| *y += v);
    }
    Ok(())
}

/// `y + rotate(clip(δ), θ)` for one received signal with a fresh perturbation.
pub fn perturb_transmission(
    y: &IqSignal,
    attack: &dyn Perturber,
    session: &PhaseSession,
    rng: &mut SimRng,
) -> Result<IqSignal> {
    let mut row = Array2::from_shape_vec((1, y.len()), y.samples().iter().map(|&v| v as f32).collect())
        .expect("row shape");
    perturb_batch(&mut row, attack, session, rng)?;
    IqSignal::new(row.iter().map(|&v| f64::from(v)).collect())
}

/// Gaussian jamming with the same average power as a budget-`p` attack.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianJammer {
    dim: usize,
    budget: f64,
}

impl GaussianJammer {
    pub fn new(dim: usize, budget: f64) -> Result<Self> {
        if dim == 0 || !(budget >= 0.0) {
            return Err(Error::invalid("jammer needs a dimension and a non-negative budget"));
        }
        Ok(Self { dim, budget })
    }
}

impl Perturber for GaussianJammer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn sample_batch(&self, n: usize, rng: &mut SimRng) -> Result<Array2<f32>> {
        let sigma = (self.budget / self.dim as f64).sqrt();
        Ok(Array2::from_shape_simple_fn((n, self.dim), || {
            (sigma * rng.sample::<f64, _>(StandardNormal)) as f32
        }))
    }
}

/// Which labels the attack loss is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTarget {
    /// The receiver's own decision on the clean input.
    #[default]
    CleanPrediction,
    /// What was actually sent.
    GroundTruth,
}

/// Training settings shared by the generator and the single-vector attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub psr_db: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Generator learning rate.
    pub learning_rate: f64,
    /// Learning rate of the single-vector attack.
    pub uap_learning_rate: f64,
    /// Weight of the consecutive-perturbation distance term.
    pub beta: f64,
    /// Weight of the discriminator term.
    pub alpha: f64,
    pub phase_policy: PhasePolicy,
    pub target: AttackTarget,
    /// Channel levels the attack's training inputs are received at.
    pub train_levels_db: Vec<f64>,
    /// Hidden widths of the generator.
    pub hidden: Vec<usize>,
    /// Leaky-ReLU hidden activations instead of ReLU.
    pub leaky: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            psr_db: -6.0,
            epochs: 1000,
            batches_per_epoch: 50,
            batch_size: 128,
            learning_rate: 3e-4,
            uap_learning_rate: 1e-2,
            beta: 0.05,
            alpha: 0.0,
            phase_policy: PhasePolicy::PerTransmission,
            target: AttackTarget::CleanPrediction,
            train_levels_db: vec![10.0],
            hidden: vec![100],
            leaky: false,
        }
    }
}

impl AttackConfig {
    /// Single-core settings per scenario. The default is the autoencoder's.
    pub fn desk(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Autoencoder => Self::default(),
            Scenario::Modulation => Self {
                epochs: 30,
                learning_rate: 1e-3,
                beta: 0.3,
                hidden: vec![512, 256],
                leaky: true,
                ..Self::default()
            },
            Scenario::Ofdm => Self {
                psr_db: -10.0,
                epochs: 40,
                learning_rate: 1e-3,
                beta: 0.3,
                train_levels_db: vec![20.0],
                hidden: vec![512, 256],
                leaky: true,
                ..Self::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.psr_db.is_finite() {
            return Err(Error::Config("psr_db must be finite".into()));
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 || self.train_levels_db.is_empty() {
            return Err(Error::Config("attack training schedule is empty".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite() && self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("attack weights must be finite and non-negative".into()));
        }
        if !(self.learning_rate > 0.0 && self.uap_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Budget `p` against a victim.
    pub fn budget(&self, victim: &dyn Victim) -> Result<f64> {
        psr_to_power_budget(self.psr_db, victim.signal_power(), victim.signal_len() / 2)
    }
}

/// Fixed attack training inputs and the labels the loss is measured against.
#[derive(Clone, Debug)]
pub struct AttackData {
    pub x: Array2<f32>,
    pub targets: Targets<f32>,
}

impl AttackData {
    pub fn draw(victim: &dyn Victim, cfg: &AttackConfig, rng: &mut SimRng) -> Result<Self> {
        let n = cfg.batches_per_epoch * cfg.batch_size;
        let levels = &cfg.train_levels_db;
        let per = n.div_ceil(levels.len());
        let mut xs = Vec::new();
        let mut truths = Vec::new();
        for &level in levels {
            let d = victim.draw(level, per, rng)?;
            xs.push(d.received);
            truths.push(d.truth.as_targets());
        }
        let x = ndarray::concatenate(Axis(0), &xs.iter().map(|a| a.view()).collect::<Vec<_>>())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let targets = match cfg.target {
            AttackTarget::GroundTruth => truths.iter().skip(1).try_fold(truths[0].clone(), |acc, t| acc.concat(t))?,
            AttackTarget::CleanPrediction => {
                let out = crate::nn::predict(victim.receiver(), &x, 4096)?;
                clean_prediction_targets(victim, &out)
            }
        };
        Ok(Self { x, targets })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Attack loss of `victim` on `x + R(θᵢ) c` and its gradient with respect to
/// the unrotated perturbation `c`.
pub(crate) fn loss_and_perturbation_grad(
    receiver: &Model<f32>,
    objective: Objective,
    x: &Array2<f32>,
    targets: &Targets<f32>,
    c: &[f32],
    thetas: &[f64],
) -> Result<(f64, Vec<f32>)> {
    let mut adv = x.clone();
    let mut rotated = c.to_vec();
    for (mut row, &theta) in adv.axis_iter_mut(Axis(0)).zip(thetas) {
        rotated.copy_from_slice(c);
        rotate_in_place(&mut rotated, theta);
        row.iter_mut().zip(&rotated).for_each(|(y, v)| *y += v);
    }
    let eval = crate::nn::evaluate_objective(receiver, &adv, targets, objective, false)?;
    let mut grad = vec![0.0f32; c.len()];
    let mut back = vec![0.0f32; c.len()];
    for (row, &theta) in eval.input_grad.axis_iter(Axis(0)).zip(thetas) {
        back.iter_mut().zip(row.iter()).for_each(|(b, g)| *b = *g);
        rotate_in_place(&mut back, -theta);
        grad.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
    }
    Ok((f64::from(eval.loss), grad))
}

/// Training-time angles: random unless the attack is phase-synchronized.
pub(crate) fn training_thetas(policy: PhasePolicy, n: usize, rng: &mut SimRng) -> Vec<f64> {
    match policy {
        PhasePolicy::None => vec![0.0; n],
        _ => (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect(),
    }
}

/// Cheap content hash of a model's parameters.
pub(crate) fn fingerprint(model: &Model<f32>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in model.params() {
        for v in &p.data {
            h ^= u64::from(v.to_bits());
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
