//! Adversarial perturbation generators against DNN-based wireless receivers.
//!
//! The crate simulates three victim systems (an end-to-end autoencoder link,
//! a modulation classifier and an OFDM signal detector), trains universal
//! perturbation attacks against them (a perturbation generator network and a
//! single-vector baseline), shapes the generator toward Gaussian-looking
//! output with a discriminator, and evaluates pilot-based and
//! adversarial-training defenses. Experiments emit CSV metric tables.

pub mod attack;
pub mod defense;
pub mod error;
pub mod eval;
pub mod gan;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod rng;
pub mod signal;
pub mod systems;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::{rng_from_seed, SeedSplitter, SimRng};
pub use signal::{IqSignal, PhasePolicy, PhaseSession};
pub use attack::{GaussianJammer, GeneratorModel, Perturber, SingleUap};
pub use defense::{Defense, DefenderKnowledge, KnowledgeKind};
pub use gan::Discriminator;
pub use metrics::{Estimate, Metric};
pub use systems::{Scenario, Victim};
pub use eval::{evaluate, sweep, Condition, SweepPoint};
pub use harness::{compare, run, ExperimentConfig, ResultTable};
