//! Complex-baseband signals, power accounting, AWGN and phase rotation.
//!
//! A signal of `N` complex samples is stored as `2N` reals: the `N` in-phase
//! values first, then the `N` quadrature values. The transmitter output is
//! normalized to unit average power per complex sample; every Eb/N0, SNR and
//! PSR conversion in this crate assumes that normalization.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SimRng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq)]
pub struct IqSignal {
    samples: Vec<f64>,
}

impl IqSignal {
    /// Wraps an interleaved-by-block real vector `[I_0..I_{N-1}, Q_0..Q_{N-1}]`.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "signal length {} is not even",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples })
    }

    pub fn from_iq(in_phase: &[f64], quadrature: &[f64]) -> Result<Self> {
        if in_phase.len() != quadrature.len() {
            return Err(Error::LengthMismatch {
                expected: in_phase.len(),
                actual: quadrature.len(),
            });
        }
        let mut samples = Vec::with_capacity(2 * in_phase.len());
        samples.extend_from_slice(in_phase);
        samples.extend_from_slice(quadrature);
        Self::new(samples)
    }

    pub fn zeros(n_complex: usize) -> Self {
        Self {
            samples: vec![0.0; 2 * n_complex],
        }
    }

    pub fn n_complex(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn in_phase(&self) -> &[f64] {
        &self.samples[..self.n_complex()]
    }

    pub fn quadrature(&self) -> &[f64] {
        &self.samples[self.n_complex()..]
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &IqSignal) -> Result<IqSignal> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &IqSignal) -> Result<IqSignal> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, k: f64) -> IqSignal {
        IqSignal {
            samples: self.samples.iter().map(|v| v * k).collect(),
        }
    }

    fn zip_with(&self, other: &IqSignal, f: impl Fn(f64, f64) -> f64) -> Result<IqSignal> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(IqSignal {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }
}

/// How the attacker's phase relates to the transmitter's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    /// Perturbation arrives phase-synchronized.
    None,
    /// One random phase per session (coherence interval).
    FixedPerSession,
    /// A fresh uniform phase for every transmission.
    #[default]
    PerTransmission,
}

/// Phase state of one session.
///
/// For [`PhasePolicy::FixedPerSession`] the angle is drawn once when the
/// session starts and then reused for every transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSession {
    policy: PhasePolicy,
    theta: f64,
}

impl PhaseSession {
    pub fn start(policy: PhasePolicy, rng: &mut SimRng) -> Self {
        let theta = match policy {
            PhasePolicy::FixedPerSession => rng.random::<f64>() * TAU,
            _ => 0.0,
        };
        Self { policy, theta }
    }

    pub fn with_theta(policy: PhasePolicy, theta: f64) -> Self {
        Self { policy, theta }
    }

    pub fn policy(&self) -> PhasePolicy {
        self.policy
    }

    /// The session angle (zero unless the policy is fixed-per-session).
    pub fn session_theta(&self) -> f64 {
        self.theta
    }

    /// Angle applied to the next transmission.
    pub fn next_theta(&self, rng: &mut SimRng) -> f64 {
        match self.policy {
            PhasePolicy::None => 0.0,
            PhasePolicy::FixedPerSession => self.theta,
            PhasePolicy::PerTransmission => rng.random::<f64>() * TAU,
        }
    }
}

/// Channel quality expressed the way each system reports it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "db", rename_all = "snake_case")]
pub enum ChannelLevel {
    EbN0(f64),
    Snr(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub level: ChannelLevel,
    /// k/N for the autoencoder; 1 for systems quoted in SNR.
    pub code_rate: f64,
    pub psr_db: f64,
    pub phase_policy: PhasePolicy,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "code_rate {} outside (0, 1]",
                self.code_rate
            )));
        }
        Ok(())
    }

    /// True when the attacker is configured stronger than the signal.
    pub fn psr_flagged(&self) -> bool {
        self.psr_db > 0.0
    }

    /// Per-real-dimension noise variance.
    pub fn noise_variance(&self) -> Result<f64> {
        match self.level {
            ChannelLevel::EbN0(db) => ebn0_to_noise_variance(db, self.code_rate),
            ChannelLevel::Snr(db) => Ok(snr_to_noise_variance(db)),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Average power per complex sample, `(1/N) Σ (I² + Q²)`.
pub fn avg_power(s: &IqSignal) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(s.norm_sq() / s.n_complex() as f64)
}

/// Per-real-dimension noise variance for a unit-power transmitter.
pub fn ebn0_to_noise_variance(ebn0_db: f64, code_rate: f64) -> Result<f64> {
    if !(code_rate > 0.0 && code_rate <= 1.0) {
        return Err(Error::invalid(format!(
            "code_rate {code_rate} outside (0, 1]"
        )));
    }
    Ok(1.0 / (2.0 * code_rate * db_to_linear(ebn0_db)))
}

/// Per-real-dimension noise variance for a unit-power signal at `snr_db`.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    1.0 / (2.0 * db_to_linear(snr_db))
}

/// Adds independent zero-mean Gaussian noise of `variance` to every real sample.
pub fn awgn(s: &IqSignal, variance: f64, rng: &mut SimRng) -> Result<IqSignal> {
    if !(variance >= 0.0) {
        return Err(Error::invalid(format!("negative noise variance {variance}")));
    }
    let sigma = variance.sqrt();
    let mut out = s.samples.clone();
    add_gaussian(&mut out, sigma, rng);
    Ok(IqSignal { samples: out })
}

pub(crate) fn add_gaussian(buf: &mut [f64], sigma: f64, rng: &mut SimRng) {
    if sigma == 0.0 {
        return;
    }
    for v in buf.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v += sigma * g;
    }
}

/// Rotates each complex sample of `samples` (block I/Q layout) by `theta`.
pub fn rotate_in_place<T: Real>(samples: &mut [T], theta: f64) {
    let n = samples.len() / 2;
    let (c, s) = (T::lit(theta.cos()), T::lit(theta.sin()));
    let (re, im) = samples.split_at_mut(n);
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        let (pr, pi) = (*r, *i);
        *r = pr * c - pi * s;
        *i = pi * c + pr * s;
    }
}

/// Phase rotation `p'_R = p_R cos θ − p_I sin θ`, `p'_I = p_I cos θ + p_R sin θ`.
pub fn rotate_phase(p: &IqSignal, theta: f64) -> IqSignal {
    let mut samples = p.samples.clone();
    rotate_in_place(&mut samples, theta);
    IqSignal { samples }
}

/// Total squared-norm budget `p` for a perturbation over `n_complex` samples.
pub fn psr_to_power_budget(psr_db: f64, signal_power: f64, n_complex: usize) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(Error::invalid(format!(
            "signal power {signal_power} must be positive"
        )));
    }
    Ok(signal_power * db_to_linear(psr_db) * n_complex as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sig(i: &[f64], q: &[f64]) -> IqSignal {
        IqSignal::from_iq(i, q).unwrap()
    }

    #[test]
    fn avg_power_examples() {
        assert_eq!(avg_power(&sig(&[1.0, 0.0], &[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(avg_power(&IqSignal::zeros(4)).unwrap(), 0.0);
        assert_eq!(avg_power(&sig(&[3.0], &[4.0])).unwrap(), 25.0);
        assert!(matches!(
            avg_power(&IqSignal::zeros(0)),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn rejects_odd_or_nonfinite() {
        assert!(IqSignal::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(IqSignal::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn ebn0_conversion() {
        assert!((ebn0_to_noise_variance(0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let v = ebn0_to_noise_variance(10.0, 4.0 / 7.0).unwrap();
        assert!((v - 0.0875).abs() < 1e-12, "{v}");
        assert!(ebn0_to_noise_variance(300.0, 0.5).unwrap() < 1e-29);
        assert!(ebn0_to_noise_variance(3.0, 0.0).is_err());
        assert!(ebn0_to_noise_variance(3.0, 1.5).is_err());
    }

    #[test]
    fn awgn_zero_variance_is_identity() {
        let s = sig(&[1.0, -2.0], &[0.5, 3.0]);
        let mut rng = rng_from_seed(1);
        assert_eq!(awgn(&s, 0.0, &mut rng).unwrap(), s);
        assert!(awgn(&s, -1.0, &mut rng).is_err());
    }

    #[test]
    fn awgn_sample_statistics() {
        let n = 500_000;
        let s = IqSignal::zeros(n);
        let mut rng = rng_from_seed(2);
        let out = awgn(&s, 0.25, &mut rng).unwrap();
        let m = out.samples().len() as f64;
        let mean = out.samples().iter().sum::<f64>() / m;
        let var = out.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((var - 0.25).abs() / 0.25 < 0.01, "var {var}");
        assert!(mean.abs() < 3.0 * 0.5 / 1e3, "mean {mean}");
    }

    #[test]
    fn rotation_examples() {
        let s = sig(&[1.0, 2.0], &[0.5, -1.0]);
        assert_eq!(rotate_phase(&s, 0.0), s);
        let r = rotate_phase(&sig(&[1.0], &[0.0]), FRAC_PI_2);
        assert!(r.in_phase()[0].abs() < 1e-15 && (r.quadrature()[0] - 1.0).abs() < 1e-15);
        let r = rotate_phase(&sig(&[0.3], &[-0.7]), PI);
        assert!((r.in_phase()[0] + 0.3).abs() < 1e-15 && (r.quadrature()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn psr_budget_examples() {
        assert!((psr_to_power_budget(0.0, 1.0, 7).unwrap() - 7.0).abs() < 1e-12);
        assert!((psr_to_power_budget(-10.0, 1.0, 1).unwrap() - 0.1).abs() < 1e-12);
        let p = psr_to_power_budget(-6.0, 1.0, 7).unwrap();
        assert!((p - 7.0 * 10f64.powf(-0.6)).abs() < 1e-12 && (p - 1.758).abs() < 1e-3);
        assert!(psr_to_power_budget(-6.0, 0.0, 7).is_err());
    }

    #[test]
    fn fixed_session_reuses_angle() {
        let mut rng = rng_from_seed(3);
        let s = PhaseSession::start(PhasePolicy::FixedPerSession, &mut rng);
        let a = s.next_theta(&mut rng);
        assert_eq!(a, s.next_theta(&mut rng));
        let p = PhaseSession::start(PhasePolicy::PerTransmission, &mut rng);
        assert_ne!(p.next_theta(&mut rng), p.next_theta(&mut rng));
        assert_eq!(PhaseSession::start(PhasePolicy::None, &mut rng).next_theta(&mut rng), 0.0);
    }

    #[test]
    fn channel_config_checks() {
        let mut c = ChannelConfig {
            level: ChannelLevel::EbN0(0.0),
            code_rate: 1.0,
            psr_db: 3.0,
            phase_policy: PhasePolicy::PerTransmission,
            rng_seed: 0,
        };
        assert!(c.validate().is_ok() && c.psr_flagged());
        assert!((c.noise_variance().unwrap() - 0.5).abs() < 1e-15);
        c.code_rate = 0.0;
        assert!(c.validate().is_err());
    }
}
