//! OFDM link with a pilot block and a data block per frame, and the
//! fully-connected bit detector that reads the received frequency-domain frame.
//!
//! The detector input is one [`IqSignal`] of 128 complex samples: subcarriers
//! of the pilot block followed by those of the data block.

use super::{Draw, Scenario, Truth, Victim};
use crate::error::{Error, Result};
use crate::metrics::{Estimate, Metric};
use crate::nn::{fit_epoch, Adam, AdamConfig, Model, ModelBuilder, Objective, Targets};
use crate::rng::{rng_from_seed, SimRng};
use crate::signal::{db_to_linear, snr_to_noise_variance, IqSignal};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmConfig {
    pub subcarriers: usize,
    pub cyclic_prefix: usize,
    /// Average power of each channel tap in dB, before normalization to unit sum.
    pub tap_powers_db: Vec<f64>,
    /// Data subcarriers whose QPSK bits the detector outputs.
    pub detected_subcarriers: usize,
    pub hidden: Vec<usize>,
    pub pilot_seed: u64,
    pub train_snr_db: Vec<f64>,
    pub frames_per_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            subcarriers: 64,
            cyclic_prefix: 16,
            tap_powers_db: vec![0.0, -3.0, -6.0],
            detected_subcarriers: 8,
            hidden: vec![500, 250, 120],
            pilot_seed: 0x5EED_0F0D,
            train_snr_db: vec![10.0, 15.0, 20.0, 25.0],
            frames_per_epoch: 20_000,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 || self.tap_powers_db.is_empty() {
            return Err(Error::Config("ofdm needs subcarriers and channel taps".into()));
        }
        if self.tap_powers_db.len() - 1 > self.cyclic_prefix {
            return Err(Error::Config(format!(
                "cyclic prefix {} shorter than channel delay spread {}",
                self.cyclic_prefix,
                self.tap_powers_db.len() - 1
            )));
        }
        if self.detected_subcarriers == 0 || self.detected_subcarriers > self.subcarriers {
            return Err(Error::Config("detected subcarriers out of range".into()));
        }
        Ok(())
    }

    pub fn bits_out(&self) -> usize {
        2 * self.detected_subcarriers
    }

    pub fn detector_layers(&self) -> ModelBuilder {
        let mut b = ModelBuilder::new(4 * self.subcarriers);
        for &h in &self.hidden {
            b = b.dense(h).relu();
        }
        b.dense(self.bits_out()).sigmoid()
    }
}

/// QPSK symbol of two bits, unit energy.
pub fn qpsk(b0: bool, b1: bool) -> Complex64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(if b0 { -a } else { a }, if b1 { -a } else { a })
}

/// One received frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OfdmFrame {
    pub input: IqSignal,
    /// Bits carried by the detected subcarriers.
    pub true_bits: Vec<bool>,
    pub channel_taps: Vec<Complex64>,
}

impl OfdmFrame {
    pub fn pilot_block(&self) -> Vec<f64> {
        let k = self.input.n_complex() / 2;
        let (i, q) = (self.input.in_phase(), self.input.quadrature());
        i[..k].iter().chain(&q[..k]).copied().collect()
    }

    pub fn data_block(&self) -> Vec<f64> {
        let k = self.input.n_complex() / 2;
        let (i, q) = (self.input.in_phase(), self.input.quadrature());
        i[k..].iter().chain(&q[k..]).copied().collect()
    }
}

/// The transmitter, channel and receiver front-end.
#[derive(Clone)]
pub struct OfdmLink {
    cfg: OfdmConfig,
    pilot: Vec<Complex64>,
    tap_std: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OfdmLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmLink").field("cfg", &self.cfg).finish()
    }
}

impl OfdmLink {
    pub fn new(cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut prng = rng_from_seed(cfg.pilot_seed);
        let pilot = (0..cfg.subcarriers).map(|_| qpsk(prng.random(), prng.random())).collect();
        let powers: Vec<f64> = cfg.tap_powers_db.iter().map(|&d| db_to_linear(d)).collect();
        let total: f64 = powers.iter().sum();
        let tap_std = powers.iter().map(|p| (p / total).sqrt()).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            pilot,
            tap_std,
            fft: planner.plan_fft_forward(cfg.subcarriers),
            ifft: planner.plan_fft_inverse(cfg.subcarriers),
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    pub fn pilot(&self) -> &[Complex64] {
        &self.pilot
    }

    /// Complex Gaussian taps with the configured power profile (unit total mean power).
    pub fn draw_channel(&self, rng: &mut SimRng) -> Vec<Complex64> {
        self.tap_std
            .iter()
            .map(|s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * (s * std::f64::consts::FRAC_1_SQRT_2)
            })
            .collect()
    }

    fn unitary(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        fft.process(buf);
        let k = 1.0 / (buf.len() as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= k);
    }

    /// Sends the pilot block then `data` through `h` with time-domain noise of
    /// per-real-dimension variance `noise_var`; returns both received blocks
    /// after CP removal and DFT.
    pub fn front_end(
        &self,
        data: &[Complex64],
        h: &[Complex64],
        noise_var: f64,
        rng: &mut SimRng,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let k = self.cfg.subcarriers;
        let cp = self.cfg.cyclic_prefix;
        if data.len() != k {
            return Err(Error::LengthMismatch { expected: k, actual: data.len() });
        }
        if h.is_empty() || h.len() - 1 > cp {
            return Err(Error::invalid(format!(
                "cyclic prefix {cp} shorter than channel delay spread {}",
                h.len().saturating_sub(1)
            )));
        }
        let mut stream = Vec::with_capacity(2 * (k + cp));
        for block in [&self.pilot[..], data] {
            let mut t = block.to_vec();
            self.unitary(&self.ifft, &mut t);
            stream.extend_from_slice(&t[k - cp..]);
            stream.extend_from_slice(&t);
        }
        let sigma = noise_var.sqrt();
        let received: Vec<Complex64> = (0..stream.len())
            .map(|n| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, tap) in h.iter().enumerate() {
                    if n >= l {
                        acc += tap * stream[n - l];
                    }
                }
                if sigma > 0.0 {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    acc += Complex64::new(re, im) * sigma;
                }
                acc
            })
            .collect();
        let mut blocks = Vec::with_capacity(2);
        for b in 0..2 {
            let start = b * (k + cp) + cp;
            let mut f = received[start..start + k].to_vec();
            self.unitary(&self.fft, &mut f);
            blocks.push(f);
        }
        let data_rx = blocks.pop().unwrap();
        let pilot_rx = blocks.pop().unwrap();
        Ok((pilot_rx, data_rx))
    }

    /// One frame with random data bits over `h` at `snr_db`.
    pub fn make_frame(&self, bits: &[bool], h: &[Complex64], snr_db: f64, rng: &mut SimRng) -> Result<OfdmFrame> {
        let k = self.cfg.subcarriers;
        if bits.len() != 2 * k {
            return Err(Error::LengthMismatch { expected: 2 * k, actual: bits.len() });
        }
        let data: Vec<Complex64> = bits.chunks(2).map(|b| qpsk(b[0], b[1])).collect();
        let (p, d) = self.front_end(&data, h, snr_to_noise_variance(snr_db), rng)?;
        let input = IqSignal::from_iq(
            &p.iter().chain(&d).map(|c| c.re).collect::<Vec<_>>(),
            &p.iter().chain(&d).map(|c| c.im).collect::<Vec<_>>(),
        )?;
        Ok(OfdmFrame {
            input,
            true_bits: bits[..self.cfg.bits_out()].to_vec(),
            channel_taps: h.to_vec(),
        })
    }

    /// `n` frames at `snr_db` with fresh bits and channels.
    pub fn batch(&self, snr_db: f64, n: usize, rng: &mut SimRng) -> Result<(Array2<f32>, Array2<f32>)> {
        let k = self.cfg.subcarriers;
        let mut x = Array2::zeros((n, 4 * k));
        let mut y = Array2::zeros((n, self.cfg.bits_out()));
        for (mut xr, mut yr) in x.axis_iter_mut(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
            let bits: Vec<bool> = (0..2 * k).map(|_| rng.random()).collect();
            let h = self.draw_channel(rng);
            let frame = self.make_frame(&bits, &h, snr_db, rng)?;
            xr.iter_mut().zip(frame.input.samples()).for_each(|(d, s)| *d = *s as f32);
            yr.iter_mut().zip(&frame.true_bits).for_each(|(d, b)| *d = f32::from(u8::from(*b)));
        }
        Ok((x, y))
    }
}

/// Trained detector plus its link.
#[derive(Clone, Debug)]
pub struct OfdmSystem {
    link: OfdmLink,
    detector: Model<f32>,
}

impl OfdmSystem {
    pub fn new(cfg: &OfdmConfig, detector: Model<f32>) -> Result<Self> {
        if detector.input_dim() != 4 * cfg.subcarriers || detector.output_dim() != cfg.bits_out() {
            return Err(Error::ShapeMismatch(format!(
                "detector {}→{} for {} subcarriers",
                detector.input_dim(),
                detector.output_dim(),
                cfg.subcarriers
            )));
        }
        Ok(Self {
            link: OfdmLink::new(cfg)?,
            detector,
        })
    }

    /// Trains the detector on fresh frames every epoch, SNRs cycling over the
    /// configured training levels.
    pub fn train(cfg: &OfdmConfig, rng: &mut SimRng) -> Result<Self> {
        let link = OfdmLink::new(cfg)?;
        let mut detector: Model<f32> = cfg.detector_layers().build(rng)?;
        train_detector(&link, &mut detector, cfg, rng)?;
        Ok(Self { link, detector })
    }

    pub fn link(&self) -> &OfdmLink {
        &self.link
    }

    pub fn detector(&self) -> &Model<f32> {
        &self.detector
    }
}

/// Fits any bit detector (target or substitute) on link frames.
pub fn train_detector(link: &OfdmLink, model: &mut Model<f32>, cfg: &OfdmConfig, rng: &mut SimRng) -> Result<()> {
    if cfg.epochs == 0 || cfg.frames_per_epoch == 0 || cfg.train_snr_db.is_empty() {
        return Err(Error::Config("ofdm training set is empty".into()));
    }
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), model.params());
    let per_level = cfg.frames_per_epoch.div_ceil(cfg.train_snr_db.len());
    for _ in 0..cfg.epochs {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &snr in &cfg.train_snr_db {
            let (x, y) = link.batch(snr, per_level, rng)?;
            xs.push(x);
            ys.push(y);
        }
        let x = ndarray::concatenate(Axis(0), &xs.iter().map(|a| a.view()).collect::<Vec<_>>())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let y = ndarray::concatenate(Axis(0), &ys.iter().map(|a| a.view()).collect::<Vec<_>>())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        fit_epoch(model, &mut adam, &x, &Targets::Values(y), Objective::Mse, cfg.batch_size, rng)?;
    }
    Ok(())
}

/// Bit-error rate of a detector over `n` frames.
pub fn ber(link: &OfdmLink, detector: &Model<f32>, snr_db: f64, n: usize, rng: &mut SimRng) -> Result<Estimate> {
    let (x, y) = link.batch(snr_db, n, rng)?;
    let out = crate::nn::predict(detector, &x, 4096)?;
    let (e, t) = super::score(Metric::Ber, &out, &Truth::Bits(y))?;
    Ok(Estimate::wilson(e, t))
}

impl Victim for OfdmSystem {
    fn scenario(&self) -> Scenario {
        Scenario::Ofdm
    }

    fn signal_len(&self) -> usize {
        4 * self.link.cfg.subcarriers
    }

    fn receiver(&self) -> &Model<f32> {
        &self.detector
    }

    fn objective(&self) -> Objective {
        Objective::Mse
    }

    fn metric(&self) -> Metric {
        Metric::Ber
    }

    fn noise_variance(&self, level_db: f64) -> Result<f64> {
        Ok(snr_to_noise_variance(level_db))
    }

    fn draw(&self, level_db: f64, n: usize, rng: &mut SimRng) -> Result<Draw> {
        let (x, y) = self.link.batch(level_db, n, rng)?;
        Ok(Draw {
            received: x,
            truth: Truth::Bits(y),
        })
    }
}
