use super::{Draw, Scenario, Truth, Victim};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::nn::{Adam, AdamConfig, Model, ModelBuilder, Objective};
use crate::nn::loss::softmax_cross_entropy;
use crate::rng::SimRng;
use crate::signal::{add_gaussian, ebn0_to_noise_variance, IqSignal};
use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    /// Bits per message; `M = 2^k`.
    pub k: u32,
    /// Complex channel uses per message.
    pub n: usize,
    pub hidden: usize,
    pub train_ebn0_db: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            k: 4,
            n: 7,
            hidden: 16,
            train_ebn0_db: 7.0,
            steps: 6000,
            batch_size: 256,
            learning_rate: 1e-3,
        }
    }
}

impl AutoencoderConfig {
    pub fn messages(&self) -> usize {
        1 << self.k
    }

    pub fn code_rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 12 || self.n == 0 {
            return Err(Error::Config(format!("autoencoder (n={}, k={}) unsupported", self.n, self.k)));
        }
        if self.code_rate() > 1.0 {
            return Err(Error::Config("autoencoder code rate above 1".into()));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("autoencoder needs steps and batch size".into()));
        }
        Ok(())
    }

    pub fn encoder_layers(&self) -> ModelBuilder {
        ModelBuilder::new(self.messages())
            .dense(self.hidden)
            .elu()
            .dense(2 * self.n)
            .power_norm(self.n as f64)
    }

    pub fn decoder_layers(&self) -> ModelBuilder {
        ModelBuilder::new(2 * self.n).dense(self.hidden).relu().dense(self.messages()).softmax()
    }
}

/// End-to-end learned transmitter/receiver pair over an AWGN channel.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    k: u32,
    encoder: Model<f32>,
    decoder: Model<f32>,
    /// One normalized codeword per message, in f64.
    codebook: Array2<f64>,
}

fn one_hot(messages: &[usize], m: usize) -> Array2<f32> {
    let mut x = Array2::zeros((messages.len(), m));
    for (i, &s) in messages.iter().enumerate() {
        x[[i, s]] = 1.0;
    }
    x
}

impl Autoencoder {
    pub fn from_models(k: u32, encoder: Model<f32>, decoder: Model<f32>) -> Result<Self> {
        let m = 1usize << k;
        if encoder.input_dim() != m || decoder.output_dim() != m {
            return Err(Error::ShapeMismatch(format!(
                "encoder input {} / decoder output {} for M={m}",
                encoder.input_dim(),
                decoder.output_dim()
            )));
        }
        if encoder.output_dim() != decoder.input_dim() || encoder.output_dim() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "encoder output {} vs decoder input {}",
                encoder.output_dim(),
                decoder.input_dim()
            )));
        }
        let all: Vec<usize> = (0..m).collect();
        let codebook = encoder.cast::<f64>().forward(&one_hot(&all, m).mapv(f64::from))?;
        Ok(Self {
            k,
            encoder,
            decoder,
            codebook,
        })
    }

    /// Trains encoder and decoder jointly through a noisy channel.
    pub fn train(cfg: &AutoencoderConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.messages();
        let mut encoder: Model<f32> = cfg.encoder_layers().build(rng)?;
        let mut decoder: Model<f32> = cfg.decoder_layers().build(rng)?;
        let mut enc_opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate), encoder.params());
        let mut dec_opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate), decoder.params());
        let sigma = ebn0_to_noise_variance(cfg.train_ebn0_db, cfg.code_rate())?.sqrt();
        for _ in 0..cfg.steps {
            let labels: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..m)).collect();
            let enc_tape = encoder.forward_cached(&one_hot(&labels, m), encoder.layers().len())?;
            let mut y = enc_tape.output().mapv(f64::from);
            add_gaussian(y.as_slice_mut().unwrap(), sigma, rng);
            let y = y.mapv(|v| v as f32);
            let dec_tape = decoder.forward_cached(&y, decoder.body_len())?;
            let (loss, g) = softmax_cross_entropy(dec_tape.output(), &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged("autoencoder loss".into()));
            }
            let (dec_grads, gy) = decoder.backward(&dec_tape, &g, true)?;
            let (enc_grads, _) = encoder.backward(&enc_tape, &gy, true)?;
            dec_opt.step(decoder.params_mut(), dec_grads.as_ref().unwrap())?;
            enc_opt.step(encoder.params_mut(), enc_grads.as_ref().unwrap())?;
        }
        if !encoder.all_finite() || !decoder.all_finite() {
            return Err(Error::Diverged("autoencoder parameters".into()));
        }
        Self::from_models(cfg.k, encoder, decoder)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn messages(&self) -> usize {
        1 << self.k
    }

    pub fn n_complex(&self) -> usize {
        self.codebook.ncols() / 2
    }

    pub fn code_rate(&self) -> f64 {
        self.k as f64 / self.n_complex() as f64
    }

    pub fn encoder(&self) -> &Model<f32> {
        &self.encoder
    }

    pub fn decoder(&self) -> &Model<f32> {
        &self.decoder
    }

    pub fn codebook(&self) -> &Array2<f64> {
        &self.codebook
    }

    pub fn encode(&self, message: usize) -> Result<IqSignal> {
        if message >= self.messages() {
            return Err(Error::LabelOutOfRange {
                label: message,
                classes: self.messages(),
            });
        }
        IqSignal::new(self.codebook.row(message).to_vec())
    }

    pub fn decode(&self, y: &IqSignal) -> Result<usize> {
        if y.len() != self.codebook.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.codebook.ncols(),
                actual: y.len(),
            });
        }
        let x = Array2::from_shape_vec((1, y.len()), y.samples().iter().map(|&v| v as f32).collect())
            .expect("row shape");
        let p = self.decoder.forward(&x)?;
        Ok(crate::nn::argmax_rows(&p)[0])
    }

    /// Codewords of `messages` with channel noise of variance `variance`.
    pub fn transmit(&self, messages: &[usize], variance: f64, rng: &mut SimRng) -> Array2<f32> {
        let mut y = self.codebook.select(Axis(0), messages);
        add_gaussian(y.as_slice_mut().unwrap(), variance.sqrt(), rng);
        y.mapv(|v| v as f32)
    }
}

impl Victim for Autoencoder {
    fn scenario(&self) -> Scenario {
        Scenario::Autoencoder
    }

    fn signal_len(&self) -> usize {
        self.codebook.ncols()
    }

    fn receiver(&self) -> &Model<f32> {
        &self.decoder
    }

    fn objective(&self) -> Objective {
        Objective::CrossEntropy
    }

    fn metric(&self) -> Metric {
        Metric::Bler
    }

    fn noise_variance(&self, level_db: f64) -> Result<f64> {
        ebn0_to_noise_variance(level_db, self.code_rate())
    }

    fn draw(&self, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Draw> {
        let var = self.noise_variance(level_db)?;
        let m = self.messages();
        let messages: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let received = self.transmit(&messages, var, rng);
        Ok(Draw {
            received,
            truth: Truth::Classes(messages),
        })
    }
}
