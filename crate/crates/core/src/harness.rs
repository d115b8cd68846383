//! Experiment driver: JSON configuration, staged seeding, sweeps, CSV result
//! tables and table comparison.

use crate::attack::{
    train_single_uap_on, AttackConfig, AttackData, GaussianJammer, GeneratorModel, PgmTrainer, Perturber,
    SingleUap,
};
use crate::defense::{
    adversarial_training, estimate_via_pilots, subtract_defense, AdvTrainConfig, AdversarialSource, DefenderKnowledge,
    KnowledgeKind,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Condition};
use crate::gan::{discriminator_f1, train_joint, Discriminator, GanConfig};
use crate::metrics::Estimate;
use crate::nn::io::{write_atomic, Container};
use crate::rng::{SeedSplitter, SimRng};
use crate::signal::{PhasePolicy, PhaseSession};
use crate::systems::autoencoder::{Autoencoder, AutoencoderConfig};
use crate::systems::modulation::{ClassifierConfig, ModulationSystem};
use crate::systems::ofdm::{OfdmConfig, OfdmSystem};
use crate::systems::substitute::{train_substitute, SubstituteConfig};
use crate::systems::{Scenario, Victim, WithReceiver};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "sweep,metric,estimate,ci_low,ci_high,n,seed";
const MIN_TRIALS: usize = 100;

/// Training settings for each victim kind; only the configured scenario's is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub ofdm: OfdmConfig,
}

/// Previously trained artifacts to load instead of training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Artifacts {
    /// Directory written by [`TrainedSystem::save`].
    pub system: Option<PathBuf>,
    /// File written by [`TrainedAttack::save`].
    pub attack: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    SingleUap,
    Pgm,
    /// Gaussian noise at the attack's power budget.
    Jammer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvSourceKind {
    /// The pilot estimate of the live perturbation.
    PilotEstimate,
    /// The defender's own generator, trained like the attacker's.
    OwnPgm,
}

fn default_pilots() -> usize {
    10_000
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseSpec {
    #[default]
    None,
    Subtract {
        knowledge: KnowledgeKind,
        #[serde(default = "default_pilots")]
        pilot_count: usize,
    },
    AdvTrain {
        source: AdvSourceKind,
        #[serde(default)]
        config: AdvTrainConfig,
        #[serde(default = "default_pilots")]
        pilot_count: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Eb/N0 (autoencoder) or SNR (modulation, OFDM) in dB.
    Level,
    Psr,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
    /// `[start, stop, step]`, inclusive of `stop`.
    #[serde(default)]
    pub range: Option<[f64; 3]>,
    /// Channel level for PSR and α sweeps.
    #[serde(default)]
    pub level_db: Option<f64>,
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        let mut pts = self.values.clone();
        if let Some([start, stop, step]) = self.range {
            if !(step > 0.0) || !(stop >= start) {
                return Err(Error::Config(format!("bad sweep range {start}..{stop} step {step}")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            pts.extend((0..=n).map(|i| start + i as f64 * step));
        }
        if pts.is_empty() {
            return Err(Error::Config("sweep has no points".into()));
        }
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(pts)
    }
}

fn per_transmission() -> PhasePolicy {
    PhasePolicy::PerTransmission
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub artifacts: Artifacts,
    #[serde(default)]
    pub attack: AttackKind,
    #[serde(default)]
    pub attack_options: AttackConfig,
    /// Train the attack against a substitute receiver.
    #[serde(default)]
    pub black_box: bool,
    #[serde(default)]
    pub substitute: SubstituteConfig,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub defense: DefenseSpec,
    /// Phase rotation of perturbations during evaluation.
    #[serde(default = "per_transmission")]
    pub eval_phase_policy: PhasePolicy,
    pub sweep: SweepSpec,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A level sweep with everything else at defaults.
    pub fn new(scenario: Scenario, sweep: SweepSpec, trials: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario,
            system: SystemSpec::default(),
            artifacts: Artifacts::default(),
            attack: AttackKind::None,
            attack_options: AttackConfig::default(),
            black_box: false,
            substitute: SubstituteConfig::default(),
            gan: GanConfig::default(),
            defense: DefenseSpec::None,
            eval_phase_policy: PhasePolicy::PerTransmission,
            sweep,
            trials,
            seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::Config(format!("trials {} below {MIN_TRIALS}", self.trials)));
        }
        self.sweep.points()?;
        self.attack_options.validate().map_err(|e| Error::Config(e.to_string()))?;
        let no_attack = self.attack == AttackKind::None;
        if self.sweep.axis != SweepAxis::Level && self.sweep.level_db.is_none() {
            return Err(Error::Config("psr and alpha sweeps need sweep.level_db".into()));
        }
        if self.sweep.axis == SweepAxis::Psr && no_attack {
            return Err(Error::Config("psr sweep needs an attack".into()));
        }
        if self.sweep.axis == SweepAxis::Alpha && self.attack != AttackKind::Pgm {
            return Err(Error::Config("alpha sweep needs the pgm attack".into()));
        }
        if self.black_box && !matches!(self.attack, AttackKind::Pgm | AttackKind::SingleUap) {
            return Err(Error::Config("black-box mode needs a trained attack".into()));
        }
        match &self.defense {
            DefenseSpec::Subtract {
                knowledge: KnowledgeKind::PerfectAware,
                ..
            } if self.attack != AttackKind::Pgm => {
                return Err(Error::Config("perfect-aware defense needs the pgm attack".into()))
            }
            DefenseSpec::Subtract { pilot_count: 0, .. } | DefenseSpec::AdvTrain { pilot_count: 0, .. } => {
                return Err(Error::Config("pilot_count must be positive".into()))
            }
            DefenseSpec::AdvTrain { .. } if no_attack => {
                return Err(Error::Config("adversarial training needs an attack to evaluate".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Stage seeds derived from the master seed.
    pub fn seeds(&self) -> SeedSplitter {
        SeedSplitter::new(self.seed)
    }
}

/// A trained victim of any scenario.
#[derive(Clone, Debug)]
pub enum TrainedSystem {
    Autoencoder(Autoencoder),
    Modulation(ModulationSystem),
    Ofdm(OfdmSystem, OfdmConfig),
}

impl TrainedSystem {
    pub fn train(scenario: Scenario, spec: &SystemSpec, rng: &mut SimRng) -> Result<Self> {
        Ok(match scenario {
            Scenario::Autoencoder => Self::Autoencoder(Autoencoder::train(&spec.autoencoder, rng)?),
            Scenario::Modulation => Self::Modulation(ModulationSystem::train(&spec.classifier, rng)?),
            Scenario::Ofdm => Self::Ofdm(OfdmSystem::train(&spec.ofdm, rng)?, spec.ofdm.clone()),
        })
    }

    pub fn victim(&self) -> &dyn Victim {
        match self {
            Self::Autoencoder(v) => v,
            Self::Modulation(v) => v,
            Self::Ofdm(v, _) => v,
        }
    }

    /// Writes `system.json` plus model files into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = match self {
            Self::Autoencoder(ae) => {
                Container::from_model(ae.encoder(), "encoder", json!({})).write(dir.join("encoder.bin"))?;
                Container::from_model(ae.decoder(), "decoder", json!({})).write(dir.join("decoder.bin"))?;
                json!({ "scenario": Scenario::Autoencoder, "k": ae.k() })
            }
            Self::Modulation(m) => {
                Container::from_model(m.classifier(), "classifier", json!({})).write(dir.join("classifier.bin"))?;
                json!({ "scenario": Scenario::Modulation, "classes": m.classes() })
            }
            Self::Ofdm(o, cfg) => {
                Container::from_model(o.detector(), "detector", json!({})).write(dir.join("detector.bin"))?;
                json!({ "scenario": Scenario::Ofdm, "ofdm": cfg })
            }
        };
        write_atomic(&dir.join("system.json"), serde_json::to_string_pretty(&meta)?.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("system.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|_| Error::MissingArtifact(meta_path.clone()))?;
        let meta: serde_json::Value = serde_json::from_str(&text)?;
        let scenario: Scenario = serde_json::from_value(meta["scenario"].clone())?;
        let model = |name: &str| -> Result<_> {
            let c = Container::read(dir.join(format!("{name}.bin")))?;
            c.expect_tag(name)?;
            c.to_model()
        };
        Ok(match scenario {
            Scenario::Autoencoder => {
                let k = meta["k"].as_u64().ok_or_else(|| Error::Truncated("system.json k".into()))? as u32;
                Self::Autoencoder(Autoencoder::from_models(k, model("encoder")?, model("decoder")?)?)
            }
            Scenario::Modulation => {
                let classes = serde_json::from_value(meta["classes"].clone())?;
                Self::Modulation(ModulationSystem::new(classes, model("classifier")?)?)
            }
            Scenario::Ofdm => {
                let cfg: OfdmConfig = serde_json::from_value(meta["ofdm"].clone())?;
                Self::Ofdm(OfdmSystem::new(&cfg, model("detector")?)?, cfg)
            }
        })
    }
}

/// A trained (or parameter-free) attack.
#[derive(Clone, Debug)]
pub enum TrainedAttack {
    Pgm(GeneratorModel),
    SingleUap(SingleUap),
    Jammer(GaussianJammer),
}

impl TrainedAttack {
    pub fn perturber(&self) -> &dyn Perturber {
        match self {
            Self::Pgm(g) => g,
            Self::SingleUap(u) => u,
            Self::Jammer(j) => j,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, cfg: &AttackConfig) -> Result<()> {
        match self {
            Self::Pgm(g) => g.save(path, cfg),
            Self::SingleUap(u) => u.save(path, cfg),
            Self::Jammer(_) => Err(Error::Config("a jammer has no parameters to save".into())),
        }
    }

    /// Loads a generator or single-perturbation file by its tag.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tag = Container::read(path)?.header.tag;
        match tag.as_str() {
            "pgm" => Ok(Self::Pgm(GeneratorModel::load(path)?.0)),
            "uap" => Ok(Self::SingleUap(SingleUap::load(path)?.0)),
            other => Err(Error::WrongTag {
                expected: "pgm or uap".into(),
                found: other.into(),
            }),
        }
    }
}

/// Loads the configured system, or trains it from the `victim` seed stage.
pub fn obtain_system(cfg: &ExperimentConfig) -> Result<TrainedSystem> {
    match &cfg.artifacts.system {
        Some(dir) => {
            let sys = TrainedSystem::load(dir)?;
            if sys.victim().scenario() != cfg.scenario {
                return Err(Error::Config(format!(
                    "system artifact is {:?}, config says {:?}",
                    sys.victim().scenario(),
                    cfg.scenario
                )));
            }
            Ok(sys)
        }
        None => TrainedSystem::train(cfg.scenario, &cfg.system, &mut cfg.seeds().rng("victim")),
    }
}

/// The receiver the attacker optimizes against: the victim itself, or a
/// substitute trained on the same task.
pub fn attack_surface<'a>(cfg: &ExperimentConfig, victim: &'a dyn Victim) -> Result<WithReceiver<'a>> {
    let model = if cfg.black_box {
        train_substitute(victim, &cfg.substitute, &mut cfg.seeds().rng("substitute"))?
    } else {
        victim.receiver().clone()
    };
    WithReceiver::new(victim, model)
}

/// Trains the configured attack against `surface`. Returns the discriminator
/// when the generator trained with one.
pub fn train_attack(
    cfg: &ExperimentConfig,
    surface: &dyn Victim,
    opts: &AttackConfig,
) -> Result<(TrainedAttack, Option<Discriminator>)> {
    let seeds = cfg.seeds();
    let mut rng = seeds.rng("attack");
    match cfg.attack {
        AttackKind::None => Err(Error::Config("no attack configured".into())),
        AttackKind::Jammer => Ok((TrainedAttack::Jammer(GaussianJammer::new(surface.signal_len(), opts.budget(surface)?)?), None)),
        AttackKind::SingleUap => {
            let data = AttackData::draw(surface, opts, &mut seeds.rng("attack-data"))?;
            Ok((TrainedAttack::SingleUap(train_single_uap_on(surface, opts, &data, &mut rng)?), None))
        }
        AttackKind::Pgm if opts.alpha > 0.0 => {
            let (g, d) = train_joint(surface, opts, &cfg.gan, &mut rng)?;
            Ok((TrainedAttack::Pgm(g), Some(d)))
        }
        AttackKind::Pgm => {
            let data = AttackData::draw(surface, opts, &mut seeds.rng("attack-data"))?;
            let mut t = PgmTrainer::with_data(surface, opts, data, &mut rng)?;
            for _ in 0..opts.epochs {
                t.epoch(None, &mut rng)?;
            }
            Ok((TrainedAttack::Pgm(t.finish()?), None))
        }
    }
}

/// The structure-aware defender's generator: same architecture, data and
/// schedule as the attacker's, different initialization and trigger stream.
pub fn defender_generator(cfg: &ExperimentConfig, victim: &dyn Victim, opts: &AttackConfig) -> Result<GeneratorModel> {
    let seeds = cfg.seeds();
    let data = AttackData::draw(victim, opts, &mut seeds.rng("attack-data"))?;
    let plain = AttackConfig { alpha: 0.0, ..opts.clone() };
    let mut rng = seeds.rng("defender");
    let mut t = PgmTrainer::with_data(victim, &plain, data, &mut rng)?;
    for _ in 0..plain.epochs {
        t.epoch(None, &mut rng)?;
    }
    t.finish()
}

/// One row of a result table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub sweep: f64,
    pub metric: String,
    pub estimate: Estimate,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, sweep: f64, metric: &str) -> Option<&Estimate> {
        self.rows
            .iter()
            .find(|r| r.sweep == sweep && r.metric == metric)
            .map(|r| &r.estimate)
    }

    /// Rows of one metric in sweep order.
    pub fn series(&self, metric: &str) -> Vec<(f64, Estimate)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.sweep, r.estimate))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.sweep, r.metric, r.estimate.value, r.estimate.ci_low, r.estimate.ci_high, r.estimate.trials, r.seed
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Config("csv header does not match the result schema".into()));
        }
        let bad = |line: &str| Error::Config(format!("malformed csv row: {line}"));
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let value = num(f[2])?;
            let trials: u64 = f[5].parse().map_err(|_| bad(line))?;
            rows.push(ResultRow {
                sweep: num(f[0])?,
                metric: f[1].to_string(),
                estimate: Estimate {
                    events: (value * trials as f64).round() as u64,
                    trials,
                    value,
                    ci_low: num(f[3])?,
                    ci_high: num(f[4])?,
                },
                seed: f[6].parse().map_err(|_| bad(line))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_csv(&text)
    }

    fn sweep_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.sweep) {
                v.push(r.sweep);
            }
        }
        v
    }
}

/// Runs the whole pipeline. Writes the CSV when the config names an output.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let system = obtain_system(cfg)?;
    let table = run_with_system(cfg, system.victim())?;
    if let Some(out) = &cfg.output {
        table.write_csv(out)?;
    }
    Ok(table)
}

/// [`run`] against an already trained victim.
pub fn run_with_system(cfg: &ExperimentConfig, victim: &dyn Victim) -> Result<ResultTable> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let points = cfg.sweep.points()?;
    let metric = victim.metric().name();
    let session = PhaseSession::start(cfg.eval_phase_policy, &mut seeds.rng("session"));
    let eval_seeds = seeds.child("eval");

    // Attack settings for sweep point `i`.
    let opts_at = |v: f64| -> AttackConfig {
        let mut o = cfg.attack_options.clone();
        match cfg.sweep.axis {
            SweepAxis::Psr => o.psr_db = v,
            SweepAxis::Alpha => o.alpha = v,
            SweepAxis::Level => {}
        }
        o
    };
    let level_at = |v: f64| if cfg.sweep.axis == SweepAxis::Level { v } else { cfg.sweep.level_db.expect("validated") };

    // One attack for level sweeps; one per point otherwise.
    let surface = attack_surface(cfg, victim)?;
    let loaded = match &cfg.artifacts.attack {
        Some(p) if cfg.attack != AttackKind::None => Some(TrainedAttack::load(p)?),
        _ => None,
    };
    let attacks: Vec<Option<(TrainedAttack, Option<Discriminator>)>> = if cfg.attack == AttackKind::None {
        points.iter().map(|_| None).collect()
    } else if let Some(a) = loaded {
        points.iter().map(|_| Some((a.clone(), None))).collect()
    } else if cfg.sweep.axis == SweepAxis::Level {
        let a = train_attack(cfg, &surface, &cfg.attack_options)?;
        points.iter().map(|_| Some(a.clone())).collect()
    } else {
        points
            .iter()
            .map(|&v| train_attack(cfg, &surface, &opts_at(v)).map(Some))
            .collect::<Result<_>>()?
    };

    let own_generator = match &cfg.defense {
        DefenseSpec::Subtract {
            knowledge: KnowledgeKind::StructureAware,
            ..
        }
        | DefenseSpec::AdvTrain {
            source: AdvSourceKind::OwnPgm,
            ..
        } => Some(defender_generator(cfg, victim, &cfg.attack_options)?),
        _ => None,
    };

    let hardened = match &cfg.defense {
        DefenseSpec::AdvTrain {
            source,
            config,
            pilot_count,
        } => {
            let attack = attacks[0].as_ref().map(|(a, _)| a.perturber());
            let model = match source {
                AdvSourceKind::OwnPgm => adversarial_training(
                    victim,
                    AdversarialSource::Generator(own_generator.as_ref().expect("trained above")),
                    config,
                    &mut seeds.rng("hardening"),
                )?,
                AdvSourceKind::PilotEstimate => {
                    let est = estimate_via_pilots(
                        attack,
                        &session,
                        victim.noise_variance(config.train_level_db)?,
                        victim.signal_len(),
                        *pilot_count,
                        &mut seeds.rng("pilots"),
                    )?;
                    adversarial_training(
                        victim,
                        AdversarialSource::Estimate(&est.delta_hat),
                        config,
                        &mut seeds.rng("hardening"),
                    )?
                }
            };
            Some(WithReceiver::new(victim, model)?)
        }
        _ => None,
    };

    let rows: Vec<Vec<ResultRow>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &v)| -> Result<Vec<ResultRow>> {
            let level = level_at(v);
            let seed = eval_seeds.seed(i as u64);
            let mut out = Vec::new();
            let mut push = |name: &str, estimate: Estimate| {
                out.push(ResultRow {
                    sweep: v,
                    metric: format!("{metric}/{name}"),
                    estimate,
                    seed,
                })
            };
            push("clean", evaluate(victim, level, &Condition::clean(), cfg.trials, seed)?);
            let attack = attacks[i].as_ref();
            let perturber = attack.map(|(a, _)| a.perturber());
            if let Some(p) = perturber {
                push("attacked", evaluate(victim, level, &Condition::attacked(p, session), cfg.trials, seed)?);
            }
            let base = Condition {
                attack: perturber,
                session,
                defense: None,
            };
            match &cfg.defense {
                DefenseSpec::None => {}
                DefenseSpec::Subtract { knowledge, pilot_count } => {
                    let k = match knowledge {
                        KnowledgeKind::AdHoc => DefenderKnowledge::ad_hoc(*pilot_count),
                        KnowledgeKind::StructureAware => {
                            DefenderKnowledge::structure_aware(*pilot_count, own_generator.clone().expect("trained above"))
                        }
                        KnowledgeKind::PerfectAware => match attack {
                            Some((TrainedAttack::Pgm(g), _)) => DefenderKnowledge::perfect_aware(*pilot_count, g),
                            _ => return Err(Error::Config("perfect-aware defense needs the pgm attack".into())),
                        },
                    };
                    let defense = subtract_defense(
                        &k,
                        perturber,
                        &session,
                        victim.noise_variance(level)?,
                        victim.signal_len(),
                        &mut eval_seeds.child("pilots").rng(&i.to_string()),
                    )?;
                    push("defended", evaluate(victim, level, &base.defended(defense.as_ref()), cfg.trials, seed)?);
                }
                DefenseSpec::AdvTrain { .. } => {
                    let h = hardened.as_ref().expect("trained above");
                    push("hardened_clean", evaluate(h, level, &Condition::clean(), cfg.trials, seed)?);
                    push("defended", evaluate(h, level, &base, cfg.trials, seed)?);
                }
            }
            if let Some((TrainedAttack::Pgm(g), Some(d))) = attack {
                let f1 = discriminator_f1(d, g, 2 * cfg.trials, &mut eval_seeds.child("f1").rng(&i.to_string()))?;
                out.push(ResultRow {
                    sweep: v,
                    metric: "f1/discriminator".into(),
                    estimate: f1,
                    seed,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        rows: rows.into_iter().flatten().collect(),
    })
}

/// CI-aware ordering of one sweep point across two tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PointComparison {
    pub sweep: f64,
    pub metric: String,
    pub first: Estimate,
    pub second: Estimate,
    /// `Equal` unless the intervals are disjoint.
    pub ordering: Ordering,
}

impl PointComparison {
    pub fn significant(&self) -> bool {
        self.ordering != Ordering::Equal
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonReport {
    pub points: Vec<PointComparison>,
}

impl ComparisonReport {
    pub fn all_ties(&self) -> bool {
        self.points.iter().all(|p| !p.significant())
    }

    /// Points of `metric` where the first table is significantly higher.
    pub fn first_higher(&self, metric: &str) -> usize {
        self.points
            .iter()
            .filter(|p| p.metric == metric && p.ordering == Ordering::Greater)
            .count()
    }

    pub fn second_higher(&self, metric: &str) -> usize {
        self.points
            .iter()
            .filter(|p| p.metric == metric && p.ordering == Ordering::Less)
            .count()
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sweep,metric,first,second,order")?;
        for p in &self.points {
            let order = match p.ordering {
                Ordering::Greater => ">",
                Ordering::Less => "<",
                Ordering::Equal => "~",
            };
            writeln!(f, "{},{},{},{},{}", p.sweep, p.metric, p.first.value, p.second.value, order)?;
        }
        Ok(())
    }
}

/// Compares every metric the two tables share at every sweep point.
pub fn compare(first: &ResultTable, second: &ResultTable) -> Result<ComparisonReport> {
    let (a, b) = (first.sweep_values(), second.sweep_values());
    if a != b {
        return Err(Error::AxisMismatch(format!("{a:?} vs {b:?}")));
    }
    let mut points = Vec::new();
    for r in &first.rows {
        if let Some(other) = second.get(r.sweep, &r.metric) {
            let ordering = if r.estimate.separated_from(other) {
                r.estimate.value.partial_cmp(&other.value).unwrap_or(Ordering::Equal)
            } else {
                Ordering::Equal
            };
            points.push(PointComparison {
                sweep: r.sweep,
                metric: r.metric.clone(),
                first: r.estimate,
                second: *other,
                ordering,
            });
        }
    }
    Ok(ComparisonReport { points })
}

/// Trains an attack against the configured system and returns it with the
/// surface it was trained on. Used by the single-stage CLI verbs.
pub fn train_attack_only(cfg: &ExperimentConfig, victim: &dyn Victim) -> Result<(TrainedAttack, Option<Discriminator>)> {
    let surface = attack_surface(cfg, victim)?;
    train_attack(cfg, &surface, &cfg.attack_options)
}
