//! Synthetic digital-modulation dataset and the convolutional classifier.

use super::{Draw, Scenario, Truth, Victim};
use crate::error::{Error, Result};
use crate::metrics::{Estimate, Metric};
use crate::nn::{fit_epoch, predict, Adam, AdamConfig, Model, ModelBuilder, Objective, Targets};
use crate::rng::SimRng;
use crate::signal::{add_gaussian, snr_to_noise_variance};
use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Complex samples per example.
pub const EXAMPLE_LEN: usize = 128;
pub const SAMPLES_PER_SYMBOL: usize = 4;
pub const ROLLOFF: f64 = 0.35;
/// RRC filter span in symbols.
pub const FILTER_SPAN: usize = 8;
/// Modulation index of both frequency-shift keyings.
pub const FSK_INDEX: f64 = 0.5;
/// Bandwidth-time product of the GFSK Gaussian filter.
pub const GFSK_BT: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "QAM16")]
    Qam16,
    #[serde(rename = "QAM64")]
    Qam64,
    #[serde(rename = "PAM4")]
    Pam4,
    #[serde(rename = "CPFSK")]
    Cpfsk,
    #[serde(rename = "GFSK")]
    Gfsk,
}

impl Modulation {
    pub const ALL: [Modulation; 8] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Psk8,
        Modulation::Qam16,
        Modulation::Qam64,
        Modulation::Pam4,
        Modulation::Cpfsk,
        Modulation::Gfsk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "8PSK",
            Modulation::Qam16 => "QAM16",
            Modulation::Qam64 => "QAM64",
            Modulation::Pam4 => "PAM4",
            Modulation::Cpfsk => "CPFSK",
            Modulation::Gfsk => "GFSK",
        }
    }

    /// Linear (pulse-shaped constellation) rather than frequency-shift keyed.
    pub fn is_linear(self) -> bool {
        !matches!(self, Modulation::Cpfsk | Modulation::Gfsk)
    }

    /// Constellation points (unnormalized) of a linear modulation.
    pub fn constellation(self) -> Vec<(f64, f64)> {
        let psk = |m: usize| -> Vec<(f64, f64)> { (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).map(|a| (a.cos(), a.sin())).collect() };
        let qam = |side: i32| {
            let levels: Vec<f64> = (0..side).map(|i| (2 * i - side + 1) as f64).collect();
            levels.iter().flat_map(|&i| levels.iter().map(move |&q| (i, q))).collect()
        };
        match self {
            Modulation::Bpsk => vec![(1.0, 0.0), (-1.0, 0.0)],
            Modulation::Qpsk => psk(4).into_iter().map(|(i, q): (f64, f64)| {
                let r = (PI / 4.0).cos();
                (i * r - q * r, i * r + q * r)
            }).collect(),
            Modulation::Psk8 => psk(8),
            Modulation::Qam16 => qam(4),
            Modulation::Qam64 => qam(8),
            Modulation::Pam4 => vec![(-3.0, 0.0), (-1.0, 0.0), (1.0, 0.0), (3.0, 0.0)],
            Modulation::Cpfsk | Modulation::Gfsk => Vec::new(),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modulation::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnsupportedModulation(s.to_string()))
    }
}

/// Unit-energy root-raised-cosine taps spanning `span` symbols.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let len = span * sps + 1;
    let mid = (len / 2) as f64;
    let b = rolloff;
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy: f64 = h.iter().map(|v| v * v).sum();
    h.iter_mut().for_each(|v| *v /= energy.sqrt());
    h
}

fn convolve(x: &[(f64, f64)], h: &[f64]) -> Vec<(f64, f64)> {
    let mut y = vec![(0.0, 0.0); x.len() + h.len() - 1];
    for (i, &(a, b)) in x.iter().enumerate() {
        if a == 0.0 && b == 0.0 {
            continue;
        }
        for (j, &t) in h.iter().enumerate() {
            y[i + j].0 += a * t;
            y[i + j].1 += b * t;
        }
    }
    y
}

/// Frequency pulse of GFSK: a one-symbol rectangle smoothed by a Gaussian,
/// scaled so a constant symbol stream gives unit frequency deviation.
fn gfsk_pulse(sps: usize) -> Vec<f64> {
    let span = 4;
    let len = span * sps + 1;
    let mid = (len / 2) as f64;
    let k = 2.0 * PI * PI * GFSK_BT * GFSK_BT / 2f64.ln();
    let gauss: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i as f64 - mid) / sps as f64;
            (-k * t * t).exp()
        })
        .collect();
    let rect = vec![1.0; sps];
    let mut pulse = vec![0.0; rect.len() + gauss.len() - 1];
    for (i, r) in rect.iter().enumerate() {
        for (j, g) in gauss.iter().enumerate() {
            pulse[i + j] += r * g;
        }
    }
    let total: f64 = pulse.iter().sum();
    pulse.iter().map(|v| v * sps as f64 / total).collect()
}

/// One noiseless synthesized burst.
#[derive(Clone, Debug)]
pub struct Burst {
    /// Unit average power samples.
    pub samples: Vec<(f64, f64)>,
    /// Window indices of symbol peaks after matched filtering (linear schemes).
    pub symbol_positions: Vec<usize>,
    /// Transmitted symbols at those positions, scaled like `samples`.
    pub symbols: Vec<(f64, f64)>,
}

/// Synthesizes `len` complex samples of `kind` at unit average power.
pub fn synthesize(kind: Modulation, len: usize, rng: &mut SimRng) -> Burst {
    let sps = SAMPLES_PER_SYMBOL;
    let margin = FILTER_SPAN * sps;
    let n_symbols = (len + 2 * margin) / sps + 2;
    let offset = margin + rng.random_range(0..sps);
    let (mut window, mut positions, mut symbols) = if kind.is_linear() {
        let points = kind.constellation();
        let syms: Vec<(f64, f64)> = (0..n_symbols).map(|_| points[rng.random_range(0..points.len())]).collect();
        let mut up = vec![(0.0, 0.0); n_symbols * sps];
        for (i, s) in syms.iter().enumerate() {
            up[i * sps] = *s;
        }
        let taps = rrc_taps(ROLLOFF, sps, FILTER_SPAN);
        let delay = taps.len() / 2;
        let shaped = convolve(&up, &taps);
        let window = shaped[offset..offset + len].to_vec();
        let mut positions = Vec::new();
        let mut kept = Vec::new();
        for (i, s) in syms.iter().enumerate() {
            let peak = i * sps + delay;
            if peak >= offset && peak < offset + len {
                positions.push(peak - offset);
                kept.push(*s);
            }
        }
        (window, positions, kept)
    } else {
        let bits: Vec<f64> = (0..n_symbols).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let freq: Vec<f64> = match kind {
            Modulation::Cpfsk => bits.iter().flat_map(|&b| std::iter::repeat_n(b, sps)).collect(),
            _ => {
                let mut up = vec![0.0; n_symbols * sps];
                for (i, b) in bits.iter().enumerate() {
                    up[i * sps] = *b;
                }
                let pulse = gfsk_pulse(sps);
                let mut f = vec![0.0; up.len() + pulse.len() - 1];
                for (i, u) in up.iter().enumerate() {
                    if *u != 0.0 {
                        for (j, p) in pulse.iter().enumerate() {
                            f[i + j] += u * p / sps as f64;
                        }
                    }
                }
                f
            }
        };
        let mut phase = rng.random::<f64>() * 2.0 * PI;
        let samples: Vec<(f64, f64)> = freq
            .iter()
            .map(|f| {
                phase += PI * FSK_INDEX * f / sps as f64;
                (phase.cos(), phase.sin())
            })
            .collect();
        (samples[offset..offset + len].to_vec(), Vec::new(), Vec::new())
    };
    let power = window.iter().map(|(i, q)| i * i + q * q).sum::<f64>() / len as f64;
    let k = if power > 0.0 { 1.0 / power.sqrt() } else { 1.0 };
    window.iter_mut().for_each(|s| *s = (s.0 * k, s.1 * k));
    symbols.iter_mut().for_each(|s| *s = (s.0 * k, s.1 * k));
    positions.shrink_to_fit();
    Burst {
        samples: window,
        symbol_positions: positions,
        symbols,
    }
}

/// Labeled examples, one `[I(128) | Q(128)]` row each.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationDataset {
    pub classes: Vec<Modulation>,
    pub x: Array2<f32>,
    pub labels: Vec<usize>,
    pub snr_db: Vec<f64>,
}

impl ModulationDataset {
    /// `count` examples cycling through `classes`, each at an SNR drawn from `snrs`.
    pub fn generate(classes: &[Modulation], snrs: &[f64], count: usize, rng: &mut SimRng) -> Result<Self> {
        if classes.is_empty() || snrs.is_empty() || count == 0 {
            return Err(Error::invalid("dataset needs classes, SNRs and a positive count"));
        }
        let mut x = Array2::zeros((count, 2 * EXAMPLE_LEN));
        let mut labels = Vec::with_capacity(count);
        let mut snr_db = Vec::with_capacity(count);
        for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
            let label = i % classes.len();
            let snr = snrs[rng.random_range(0..snrs.len())];
            let burst = synthesize(classes[label], EXAMPLE_LEN, rng);
            let mut buf: Vec<f64> = burst.samples.iter().map(|s| s.0).chain(burst.samples.iter().map(|s| s.1)).collect();
            add_gaussian(&mut buf, snr_to_noise_variance(snr).sqrt(), rng);
            row.iter_mut().zip(&buf).for_each(|(d, s)| *d = *s as f32);
            labels.push(label);
            snr_db.push(snr);
        }
        Ok(Self {
            classes: classes.to_vec(),
            x,
            labels,
            snr_db,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            classes: self.classes.clone(),
            x: self.x.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            snr_db: rows.iter().map(|&i| self.snr_db[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub classes: Vec<Modulation>,
    pub conv1_kernels: usize,
    pub conv2_kernels: usize,
    pub dense: usize,
    pub train_examples: usize,
    pub train_snr_db: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ClassifierConfig {
    /// Full-width convolutional network (flatten 10560).
    pub fn full_scale() -> Self {
        Self {
            conv1_kernels: 256,
            conv2_kernels: 80,
            dense: 256,
            train_examples: 88_000,
            epochs: 20,
            ..Self::desk()
        }
    }

    /// Reduced width for single-machine runs.
    pub fn reduced() -> Self {
        Self {
            conv1_kernels: 64,
            conv2_kernels: 40,
            dense: 512,
            ..Self::desk()
        }
    }

    /// Small enough to train in well under a minute on one core.
    pub fn desk() -> Self {
        Self {
            classes: Modulation::ALL.to_vec(),
            conv1_kernels: 32,
            conv2_kernels: 16,
            dense: 128,
            train_examples: 24_000,
            train_snr_db: vec![0.0, 4.0, 8.0, 10.0, 12.0, 16.0],
            epochs: 8,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }

    pub fn layers(&self) -> ModelBuilder {
        ModelBuilder::new(2 * EXAMPLE_LEN)
            .volume(1, 2, EXAMPLE_LEN)
            .conv2d(self.conv1_kernels, [1, 3], [1, 1], [0, 2])
            .leaky_relu()
            .conv2d(self.conv2_kernels, [2, 3], [1, 1], [0, 2])
            .leaky_relu()
            .dense(self.dense)
            .leaky_relu()
            .dense(self.classes.len())
            .softmax()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("classifier needs at least two classes".into()));
        }
        if self.train_examples == 0 || self.epochs == 0 || self.batch_size == 0 || self.train_snr_db.is_empty() {
            return Err(Error::Config("classifier training set is empty".into()));
        }
        Ok(())
    }
}

/// Fits `model` to a dataset for `epochs` epochs. Returns the last epoch loss.
pub fn fit_classifier(
    model: &mut Model<f32>,
    ds: &ModulationDataset,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut adam = Adam::new(AdamConfig::with_lr(learning_rate), model.params());
    let targets = Targets::Classes(ds.labels.clone());
    let mut loss = f64::NAN;
    for _ in 0..epochs {
        loss = fit_epoch(model, &mut adam, &ds.x, &targets, Objective::CrossEntropy, batch_size, rng)?;
    }
    Ok(loss)
}

/// Test accuracy of a classifier on a dataset.
pub fn accuracy(model: &Model<f32>, ds: &ModulationDataset) -> Result<Estimate> {
    let out = predict(model, &ds.x, 2048)?;
    let (c, n) = super::score(Metric::Accuracy, &out, &Truth::Classes(ds.labels.clone()))?;
    Ok(Estimate::wilson(c, n))
}

/// A trained classifier with its signal source.
#[derive(Clone, Debug)]
pub struct ModulationSystem {
    classes: Vec<Modulation>,
    classifier: Model<f32>,
}

impl ModulationSystem {
    pub fn new(classes: Vec<Modulation>, classifier: Model<f32>) -> Result<Self> {
        if classifier.input_dim() != 2 * EXAMPLE_LEN || classifier.output_dim() != classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "classifier {}→{} for {} classes",
                classifier.input_dim(),
                classifier.output_dim(),
                classes.len()
            )));
        }
        Ok(Self { classes, classifier })
    }

    pub fn train(cfg: &ClassifierConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let ds = ModulationDataset::generate(&cfg.classes, &cfg.train_snr_db, cfg.train_examples, rng)?;
        let mut model: Model<f32> = cfg.layers().build(rng)?;
        fit_classifier(&mut model, &ds, cfg.epochs, cfg.batch_size, cfg.learning_rate, rng)?;
        Self::new(cfg.classes.clone(), model)
    }

    pub fn classes(&self) -> &[Modulation] {
        &self.classes
    }

    pub fn classifier(&self) -> &Model<f32> {
        &self.classifier
    }
}

impl Victim for ModulationSystem {
    fn scenario(&self) -> Scenario {
        Scenario::Modulation
    }

    fn signal_len(&self) -> usize {
        2 * EXAMPLE_LEN
    }

    fn receiver(&self) -> &Model<f32> {
        &self.classifier
    }

    fn objective(&self) -> Objective {
        Objective::CrossEntropy
    }

    fn metric(&self) -> Metric {
        Metric::Accuracy
    }

    fn noise_variance(&self, level_db: f64) -> Result<f64> {
        Ok(snr_to_noise_variance(level_db))
    }

    fn draw(&self, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Draw> {
        let ds = ModulationDataset::generate(&self.classes, &[level_db], n.max(1), rng)?;
        // Random class order so partial batches are not biased toward early labels.
        let mut rows: Vec<usize> = (0..ds.len()).collect();
        rand::seq::SliceRandom::shuffle(rows.as_mut_slice(), rng);
        let ds = ds.select(&rows[..n]);
        Ok(Draw {
            received: ds.x,
            truth: Truth::Classes(ds.labels),
        })
    }
}
