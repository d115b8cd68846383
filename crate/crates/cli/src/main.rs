use clap::{Args, Parser, Subcommand};
use rfadv::gan::{discriminator_f1, train_joint};
use rfadv::harness::{
    compare, obtain_system, run, train_attack_only, AttackKind, DefenseSpec, ExperimentConfig, ResultTable,
};
use rfadv::nn::io::save_model;
use rfadv::systems::substitute::train_substitute;
use rfadv::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Adversarial perturbation experiments against learned wireless receivers.
#[derive(Parser)]
#[command(name = "rfadv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for artifacts and results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the victim system and save it under --out.
    TrainSystem(Common),
    /// Train a perturbation generator.
    TrainPgm(Common),
    /// Train a single universal perturbation.
    TrainUap(Common),
    /// Train a substitute receiver for black-box attacks.
    TrainSubstitute(Common),
    /// Train a generator jointly with a Gaussian-vs-perturbation discriminator.
    GanTrain(Common),
    /// Evaluate the configured attack over the sweep (no defense).
    AttackEval(Common),
    /// Evaluate the configured attack and defense over the sweep.
    DefenseEval(Common),
    /// Per-point ordering of two result tables.
    Compare {
        first: PathBuf,
        second: PathBuf,
    },
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| Error::Config("--out <dir> is required".into()))?;
        std::fs::create_dir_all(dir)?;
        Ok(dir)
    }
}

fn train_system(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let dir = c.out_dir()?;
    obtain_system(&cfg)?.save(dir)?;
    println!("system written to {}", dir.display());
    Ok(())
}

fn train_attack(c: &Common, kind: AttackKind, file: &str) -> Result<()> {
    let mut cfg = c.load()?;
    cfg.attack = kind;
    cfg.artifacts.attack = None;
    cfg.validate()?;
    let dir = c.out_dir()?;
    let system = obtain_system(&cfg)?;
    let (attack, disc) = train_attack_only(&cfg, system.victim())?;
    let path = dir.join(file);
    attack.save(&path, &cfg.attack_options)?;
    if let Some(d) = disc {
        d.save(dir.join("disc.bin"))?;
    }
    println!("{} written", path.display());
    Ok(())
}

fn train_substitute_cmd(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let dir = c.out_dir()?;
    let system = obtain_system(&cfg)?;
    let model = train_substitute(system.victim(), &cfg.substitute, &mut cfg.seeds().rng("substitute"))?;
    let path = dir.join("substitute.bin");
    save_model(&model, &path)?;
    println!("{} written", path.display());
    Ok(())
}

fn gan_train(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    if cfg.attack_options.alpha <= 0.0 {
        return Err(Error::Config("gan-train needs attack_options.alpha > 0".into()));
    }
    let dir = c.out_dir()?;
    let system = obtain_system(&cfg)?;
    let seeds = cfg.seeds();
    let (g, d) = train_joint(system.victim(), &cfg.attack_options, &cfg.gan, &mut seeds.rng("attack"))?;
    g.save(dir.join("pgm.bin"), &cfg.attack_options)?;
    d.save(dir.join("disc.bin"))?;
    let f1 = discriminator_f1(&d, &g, 4000, &mut seeds.rng("f1"))?;
    println!("discriminator f1 {:.4} [{:.4}, {:.4}]", f1.value, f1.ci_low, f1.ci_high);
    Ok(())
}

fn evaluate(c: &Common, defended: bool) -> Result<()> {
    let mut cfg = c.load()?;
    match (&cfg.defense, defended) {
        (DefenseSpec::None, true) => return Err(Error::Config("defense-eval needs a defense".into())),
        (DefenseSpec::None, false) | (_, true) => {}
        (_, false) => return Err(Error::Config("attack-eval takes no defense; use defense-eval".into())),
    }
    if c.out.is_some() {
        cfg.output = Some(c.out_dir()?.join("results.csv"));
    }
    let table = run(&cfg)?;
    print!("{}", table.to_csv());
    Ok(())
}

fn compare_cmd(first: &Path, second: &Path) -> Result<()> {
    let report = compare(&ResultTable::read_csv(first)?, &ResultTable::read_csv(second)?)?;
    print!("{report}");
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::TrainSystem(c) => train_system(c),
        Command::TrainPgm(c) => train_attack(c, AttackKind::Pgm, "pgm.bin"),
        Command::TrainUap(c) => train_attack(c, AttackKind::SingleUap, "uap.bin"),
        Command::TrainSubstitute(c) => train_substitute_cmd(c),
        Command::GanTrain(c) => gan_train(c),
        Command::AttackEval(c) => evaluate(c, false),
        Command::DefenseEval(c) => evaluate(c, true),
        Command::Compare { first, second } => compare_cmd(first, second),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
