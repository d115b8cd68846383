//! Monte-Carlo estimators with 95% confidence intervals.

use crate::rng::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// What a system reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Block-error rate: fraction of messages decoded wrongly.
    Bler,
    /// Fraction of examples classified correctly.
    Accuracy,
    /// Bit-error rate over every detected bit.
    Ber,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Bler => "bler",
            Metric::Accuracy => "accuracy",
            Metric::Ber => "ber",
        }
    }

    /// True when an attack wants the metric to go up.
    pub fn higher_is_worse(self) -> bool {
        !matches!(self, Metric::Accuracy)
    }

    /// Signed damage of `attacked` relative to `clean`, positive when worse.
    pub fn damage(self, clean: f64, attacked: f64) -> f64 {
        if self.higher_is_worse() {
            attacked - clean
        } else {
            clean - attacked
        }
    }
}

/// A proportion estimate with its interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub events: u64,
    pub trials: u64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    /// Wilson score interval for `events` successes out of `trials`.
    pub fn wilson(events: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                events,
                trials,
                value: 0.0,
                ci_low: 0.0,
                ci_high: 1.0,
            };
        }
        let n = trials as f64;
        let p = events as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            events,
            trials,
            value: p,
            ci_low: (center - half).clamp(0.0, p),
            ci_high: (center + half).clamp(p, 1.0),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// The point estimate, or one event's worth when nothing was observed.
    ///
    /// Ratios against a zero-event baseline would otherwise be vacuous.
    pub fn floored(&self) -> f64 {
        self.value.max(1.0 / self.trials.max(1) as f64)
    }

    /// True when the two intervals do not overlap.
    pub fn separated_from(&self, other: &Estimate) -> bool {
        self.ci_low > other.ci_high || other.ci_low > self.ci_high
    }

    /// Pools counts of two estimates over the same quantity.
    pub fn pooled(&self, other: &Estimate) -> Estimate {
        Estimate::wilson(self.events + other.events, self.trials + other.trials)
    }
}

/// Counts for the positive class of a binary detector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs(pairs: &[(bool, bool)]) -> Self {
        let mut c = Confusion::default();
        for &(truth, predicted) in pairs {
            match (truth, predicted) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; zero when nothing is predicted positive.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// f1 with a percentile-bootstrap interval over `(truth, predicted)` pairs.
pub fn f1_with_bootstrap(pairs: &[(bool, bool)], resamples: usize, rng: &mut SimRng) -> Estimate {
    let point = Confusion::from_pairs(pairs).f1();
    let n = pairs.len();
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut c = Confusion::default();
        for _ in 0..n {
            let (t, p) = pairs[rng.random_range(0..n)];
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        stats.push(c.f1());
    }
    stats.sort_by(f64::total_cmp);
    let q = |f: f64| stats[((f * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    let (lo, hi) = if stats.is_empty() { (point, point) } else { (q(0.025), q(0.975)) };
    let tp = Confusion::from_pairs(pairs).tp;
    Estimate {
        events: tp,
        trials: n as u64,
        value: point,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn wilson_contains_point() {
        for (k, n) in [(0, 10), (10, 10), (3, 7), (1, 100_000), (50_000, 100_000)] {
            let e = Estimate::wilson(k, n);
            assert!(e.ci_low <= e.value && e.value <= e.ci_high, "{e:?}");
            assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
        }
    }

    #[test]
    fn wilson_matches_reference() {
        // 50/100: center 0.5, half-width 1.96·sqrt(0.25/100 + 1.96²/40000)/(1+1.96²/100)
        let e = Estimate::wilson(50, 100);
        assert!((e.ci_low - 0.403_831).abs() < 1e-5, "{e:?}");
        assert!((e.ci_high - 0.596_169).abs() < 1e-5, "{e:?}");
    }

    #[test]
    fn f1_edge_cases() {
        let never_positive: Vec<_> = (0..10).map(|i| (i % 2 == 0, false)).collect();
        assert_eq!(Confusion::from_pairs(&never_positive).f1(), 0.0);
        let perfect: Vec<_> = (0..10).map(|i| (i % 2 == 0, i % 2 == 0)).collect();
        let e = f1_with_bootstrap(&perfect, 200, &mut rng_from_seed(1));
        assert_eq!(e.value, 1.0);
        assert!(e.ci_low <= 1.0);
    }

    #[test]
    fn damage_direction() {
        assert!(Metric::Bler.damage(0.01, 0.1) > 0.0);
        assert!(Metric::Accuracy.damage(0.8, 0.3) > 0.0);
    }
}
