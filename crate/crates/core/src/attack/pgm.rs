//! Perturbation generator: a network mapping uniform triggers to
//! budget-clipped perturbations, trained against a frozen receiver.

use super::{
    clip_backward, clip_to_budget, fingerprint, loss_and_perturbation_grad, sample_trigger, training_thetas,
    AttackConfig, AttackData, Perturber,
};
use crate::error::{Error, Result};
use crate::gan::Discriminator;
use crate::nn::io::Container;
use crate::nn::{Adam, AdamConfig, Model, ModelBuilder};
use crate::rng::SimRng;
use crate::signal::IqSignal;
use crate::systems::Victim;
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;
use std::path::Path;

/// A trained generator `G` and the budget its outputs are clipped to.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    model: Model<f32>,
    budget: f64,
}

/// Generator layers: trigger and output both `dim` wide.
pub fn generator_layers(dim: usize, hidden: &[usize], leaky: bool) -> ModelBuilder {
    let mut b = ModelBuilder::new(dim);
    for &h in hidden {
        b = b.dense(h);
        b = if leaky { b.leaky_relu() } else { b.relu() };
    }
    b.dense(dim)
}

/// Sets the first layer's bias so its pre-activations are zero-mean over
/// uniform `[0,1)` triggers. Without this the trigger mean dominates wide
/// inputs and every trigger starts out mapping to nearly the same output.
pub fn center_trigger(model: &mut Model<f32>) {
    let (w, b) = match model.params_mut() {
        [w, b, ..] if w.shape.len() == 2 => (w.clone(), b),
        _ => return,
    };
    let outputs = w.shape[1];
    for (o, bias) in b.data.iter_mut().enumerate() {
        *bias = -0.5 * w.data.iter().skip(o).step_by(outputs).sum::<f32>();
    }
}

impl GeneratorModel {
    pub fn new(model: Model<f32>, budget: f64) -> Result<Self> {
        if model.input_dim() != model.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "generator trigger {} vs output {}",
                model.input_dim(),
                model.output_dim()
            )));
        }
        if !(budget > 0.0) {
            return Err(Error::invalid(format!("power budget {budget} must be positive")));
        }
        Ok(Self { model, budget })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn trigger_dim(&self) -> usize {
        self.model.input_dim()
    }

    /// Unclipped output `G(z)`.
    pub fn raw(&self, z: &[f32]) -> Result<Vec<f32>> {
        if z.len() != self.trigger_dim() {
            return Err(Error::LengthMismatch {
                expected: self.trigger_dim(),
                actual: z.len(),
            });
        }
        let x = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row shape");
        Ok(self.model.forward(&x)?.into_raw_vec_and_offset().0)
    }

    /// The clipped perturbation for trigger `z`.
    pub fn generate(&self, z: &[f32]) -> Result<IqSignal> {
        let mut g = self.raw(z)?;
        clip_to_budget(&mut g, self.budget);
        IqSignal::new(g.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>, config: &AttackConfig) -> Result<()> {
        Container::from_model(&self.model, "pgm", json!({ "budget": self.budget, "config": config })).write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, AttackConfig)> {
        let c = Container::read(path)?;
        c.expect_tag("pgm")?;
        let budget = c.header.meta["budget"]
            .as_f64()
            .ok_or_else(|| Error::Truncated("pgm budget missing".into()))?;
        let config = serde_json::from_value(c.header.meta["config"].clone())?;
        Ok((Self::new(c.to_model()?, budget)?, config))
    }
}

impl Perturber for GeneratorModel {
    fn dim(&self) -> usize {
        self.model.output_dim()
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn sample_batch(&self, n: usize, rng: &mut SimRng) -> Result<Array2<f32>> {
        sample_clipped(&self.model, self.budget, n, rng)
    }
}

/// `n` clipped outputs of `model` for fresh uniform triggers.
pub(crate) fn sample_clipped(model: &Model<f32>, budget: f64, n: usize, rng: &mut SimRng) -> Result<Array2<f32>> {
    let d = model.input_dim();
    let z = Array2::from_shape_simple_fn((n, d), || rng.random::<f32>());
    let mut out = Array2::zeros((n, model.output_dim()));
    for start in (0..n).step_by(1024) {
        let end = (start + 1024).min(n);
        let g = model.forward(&z.slice(s![start..end, ..]).to_owned())?;
        out.slice_mut(s![start..end, ..]).assign(&g);
    }
    for mut row in out.axis_iter_mut(Axis(0)) {
        clip_to_budget(row.as_slice_mut().expect("row-major"), budget);
    }
    Ok(out)
}

/// Diagnostics of one generator update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    /// Mean victim loss on the perturbed batch (the attacker maximizes it).
    pub attack_loss: f64,
    /// Distance between the perturbations for this and the previous trigger.
    pub distance: f64,
    /// Discriminator regularizer value (zero when unused).
    pub undetect: f64,
    /// Objective the generator step descends.
    pub objective: f64,
}

/// Incremental generator training, one mini-batch at a time.
pub struct PgmTrainer<'a> {
    victim: &'a dyn Victim,
    cfg: AttackConfig,
    budget: f64,
    generator: Model<f32>,
    adam: Adam<f32>,
    prev_trigger: Option<Vec<f32>>,
    data: AttackData,
    victim_print: u64,
}

impl<'a> PgmTrainer<'a> {
    pub fn new(victim: &'a dyn Victim, cfg: &AttackConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let data = AttackData::draw(victim, cfg, rng)?;
        Self::with_data(victim, cfg, data, rng)
    }

    /// Trains on an existing input set (a defender replicating the attacker's data).
    pub fn with_data(victim: &'a dyn Victim, cfg: &AttackConfig, data: AttackData, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        if data.x.ncols() != victim.signal_len() {
            return Err(Error::ShapeMismatch(format!(
                "attack data width {} vs signal length {}",
                data.x.ncols(),
                victim.signal_len()
            )));
        }
        let budget = cfg.budget(victim)?;
        let mut generator: Model<f32> = generator_layers(victim.signal_len(), &cfg.hidden, cfg.leaky).build(rng)?;
        center_trigger(&mut generator);
        let adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), generator.params());
        Ok(Self {
            victim,
            cfg: cfg.clone(),
            budget,
            generator,
            adam,
            prev_trigger: None,
            data,
            victim_print: fingerprint(victim.receiver()),
        })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn config(&self) -> &AttackConfig {
        &self.cfg
    }

    pub fn data(&self) -> &AttackData {
        &self.data
    }

    /// Current generator, clipped to the budget.
    pub fn snapshot(&self) -> GeneratorModel {
        GeneratorModel {
            model: self.generator.clone(),
            budget: self.budget,
        }
    }

    /// `n` clipped perturbations from the current generator.
    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Result<Array2<f32>> {
        sample_clipped(&self.generator, self.budget, n, rng)
    }

    /// Shuffled mini-batches of one epoch.
    pub fn epoch_batches(&self, rng: &mut SimRng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(rng);
        order.chunks(self.cfg.batch_size).map(|c| c.to_vec()).collect()
    }

    /// One generator update on the rows `batch` of the training inputs.
    ///
    /// The distance term compares this step's perturbation with the one the
    /// current parameters produce for the previous step's trigger, so it
    /// rewards trigger-dependent output rather than drift between updates.
    pub fn step(&mut self, batch: &[usize], disc: Option<&Discriminator>, rng: &mut SimRng) -> Result<StepStats> {
        let dim = self.generator.input_dim();
        let z = sample_trigger(dim, rng);
        let rows = if self.prev_trigger.is_some() { 2 } else { 1 };
        let mut zs = z.clone();
        if let Some(p) = &self.prev_trigger {
            zs.extend_from_slice(p);
        }
        let zs = Array2::from_shape_vec((rows, dim), zs).expect("trigger rows");
        let tape = self.generator.forward_cached(&zs, self.generator.layers().len())?;
        let out = tape.output();
        let g: Vec<f32> = out.row(0).to_vec();
        let mut c = g.clone();
        clip_to_budget(&mut c, self.budget);

        let xb = self.data.x.select(Axis(0), batch);
        let tb = self.data.targets.select(batch);
        let thetas = training_thetas(self.cfg.phase_policy, batch.len(), rng);
        let (loss, dl_dc) =
            loss_and_perturbation_grad(self.victim.receiver(), self.victim.objective(), &xb, &tb, &c, &thetas)?;
        let mut dj: Vec<f32> = dl_dc.iter().map(|v| -v).collect();

        let mut upstream = Array2::<f32>::zeros((rows, dim));
        let mut distance = 0.0;
        if rows == 2 {
            let g_prev: Vec<f32> = out.row(1).to_vec();
            let mut c_prev = g_prev.clone();
            clip_to_budget(&mut c_prev, self.budget);
            let diff: Vec<f32> = c.iter().zip(&c_prev).map(|(a, b)| a - b).collect();
            distance = diff.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
            if self.cfg.beta > 0.0 && distance > 0.0 {
                let k = (self.cfg.beta / distance) as f32;
                dj.iter_mut().zip(&diff).for_each(|(d, v)| *d -= k * v);
                let dprev: Vec<f32> = diff.iter().map(|v| k * v).collect();
                let back = clip_backward(&g_prev, &dprev, self.budget);
                upstream.row_mut(1).assign(&ndarray::ArrayView1::from(&back));
            }
        }

        let mut undetect = 0.0;
        if self.cfg.alpha > 0.0 {
            if let Some(d) = disc {
                let (r, gr) = d.regularizer(&c)?;
                undetect = r;
                let a = self.cfg.alpha as f32;
                dj.iter_mut().zip(&gr).for_each(|(d, v)| *d += a * v);
            }
        }

        let back = clip_backward(&g, &dj, self.budget);
        upstream.row_mut(0).assign(&ndarray::ArrayView1::from(&back));
        let (grads, _) = self.generator.backward(&tape, &upstream, true)?;
        self.adam.step(self.generator.params_mut(), grads.as_ref().expect("requested"))?;
        self.prev_trigger = Some(z);
        Ok(StepStats {
            attack_loss: loss,
            distance,
            undetect,
            objective: -loss - self.cfg.beta * distance + self.cfg.alpha * undetect,
        })
    }

    /// One pass over the training inputs. Returns the mean attack loss.
    pub fn epoch(&mut self, disc: Option<&Discriminator>, rng: &mut SimRng) -> Result<f64> {
        let batches = self.epoch_batches(rng);
        let mut total = 0.0;
        for b in &batches {
            total += self.step(b, disc, rng)?.attack_loss;
        }
        Ok(total / batches.len().max(1) as f64)
    }

    /// Finishes training, verifying the victim was left untouched.
    pub fn finish(self) -> Result<GeneratorModel> {
        if fingerprint(self.victim.receiver()) != self.victim_print {
            return Err(Error::invalid("victim receiver changed during attack training"));
        }
        if !self.generator.all_finite() {
            return Err(Error::Diverged("generator parameters".into()));
        }
        GeneratorModel::new(self.generator, self.budget)
    }
}

/// Trains a generator for `cfg.epochs` epochs without a discriminator.
pub fn train_pgm(victim: &dyn Victim, cfg: &AttackConfig, rng: &mut SimRng) -> Result<GeneratorModel> {
    let mut t = PgmTrainer::new(victim, cfg, rng)?;
    for _ in 0..cfg.epochs {
        t.epoch(None, rng)?;
    }
    t.finish()
}
