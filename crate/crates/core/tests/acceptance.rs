//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use ndarray::{Array2, Axis};
use rand::Rng;
use rfadv::attack::{clip_backward, clip_to_budget, train_single_uap, AttackConfig, AttackData, PgmTrainer};
use rfadv::defense::{
    adversarial_training, estimate_via_pilots, subtract_defense, AdvTrainConfig, AdversarialSource, DefenderKnowledge,
    SubtractEstimate,
};
use rfadv::gan::{discriminator_f1, train_joint, undetect_regularizer, GanConfig};
use rfadv::harness::{run, AttackKind, DefenseSpec, ExperimentConfig, SweepAxis, SweepSpec};
use rfadv::nn::gradcheck::{check_model, finite_difference, GradCheckReport};
use rfadv::nn::loss::{bce_with_logits, mse, softmax_cross_entropy};
use rfadv::nn::{Activation, Model, ModelBuilder};
use rfadv::signal::rotate_in_place;
use rfadv::systems::autoencoder::{Autoencoder, AutoencoderConfig};
use rfadv::systems::hamming;
use rfadv::systems::modulation::{ClassifierConfig, ModulationSystem};
use rfadv::systems::ofdm::{OfdmConfig, OfdmSystem};
use rfadv::systems::substitute::{train_substitute, SubstituteConfig};
use rfadv::systems::WithReceiver;
use rfadv::*;
use std::time::Instant;

const AE_TRIALS: usize = 100_000;
const MOD_TRIALS: usize = 20_000;
const OFDM_TRIALS: usize = 20_000;
const EVAL_SEED: u64 = 5;

struct Scoreboard {
    failed: usize,
}

impl Scoreboard {
    fn report(&mut self, n: usize, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {n:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn per_tx() -> PhaseSession {
    PhaseSession::with_theta(PhasePolicy::PerTransmission, 0.0)
}

fn fixed_session() -> PhaseSession {
    PhaseSession::start(PhasePolicy::FixedPerSession, &mut rng_from_seed(7))
}

fn pgm(victim: &dyn Victim, cfg: &AttackConfig, data_seed: u64, seed: u64) -> GeneratorModel {
    let data = AttackData::draw(victim, cfg, &mut rng_from_seed(data_seed)).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut t = PgmTrainer::with_data(victim, cfg, data, &mut rng).unwrap();
    for _ in 0..cfg.epochs {
        t.epoch(None, &mut rng).unwrap();
    }
    t.finish().unwrap()
}

fn eval(victim: &dyn Victim, level: f64, cond: &Condition<'_>, trials: usize) -> Estimate {
    evaluate(victim, level, cond, trials, EVAL_SEED).unwrap()
}

/// `a` is significantly more damaging than `b` for this metric.
fn worse(metric: Metric, a: &Estimate, b: &Estimate) -> bool {
    let higher = a.ci_low > b.ci_high;
    let lower = a.ci_high < b.ci_low;
    if metric.higher_is_worse() {
        higher
    } else {
        lower
    }
}

fn int_range(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(f64::from).collect()
}

/// A scenario's victim with the attacks every criterion shares.
struct Arena<V: Victim> {
    victim: V,
    cfg: AttackConfig,
    pgm: GeneratorModel,
    uap: SingleUap,
    jammer: GaussianJammer,
}

impl<V: Victim> Arena<V> {
    fn new(victim: V, cfg: AttackConfig) -> Self {
        let pgm = pgm(&victim, &cfg, 20, 2);
        let uap = train_single_uap(&victim, &cfg, &mut rng_from_seed(4)).unwrap();
        let jammer = GaussianJammer::new(victim.signal_len(), cfg.budget(&victim).unwrap()).unwrap();
        Self {
            victim,
            cfg,
            pgm,
            uap,
            jammer,
        }
    }

    /// PGM and UAP both significantly beat the jammer at every level.
    fn jamming_dominance(&self, levels: &[f64], trials: usize) -> (bool, String) {
        let m = self.victim.metric();
        let s = per_tx();
        let mut ok = true;
        let mut worst = String::new();
        for &lvl in levels {
            let jam = eval(&self.victim, lvl, &Condition::attacked(&self.jammer, s), trials);
            let p = eval(&self.victim, lvl, &Condition::attacked(&self.pgm, s), trials);
            let u = eval(&self.victim, lvl, &Condition::attacked(&self.uap, s), trials);
            if !(worse(m, &p, &jam) && worse(m, &u, &jam)) {
                ok = false;
                worst = format!(" failing at {lvl} dB: pgm {:.3e} uap {:.3e} jammer {:.3e}", p.value, u.value, jam.value);
            }
        }
        (ok, format!("{:?} {} levels{worst}", self.victim.scenario(), levels.len()))
    }

    /// Black-box PGM effect lies in `[jammer, white-box]`, strictly above the jammer.
    fn black_box_band(&self, level: f64, trials: usize) -> (bool, String) {
        let sub_cfg = SubstituteConfig::desk(self.victim.scenario());
        let sub = train_substitute(&self.victim, &sub_cfg, &mut rng_from_seed(40)).unwrap();
        let surface = WithReceiver::new(&self.victim, sub).unwrap();
        let bb = pgm(&surface, &self.cfg, 41, 42);
        let m = self.victim.metric();
        let s = per_tx();
        let wb = eval(&self.victim, level, &Condition::attacked(&self.pgm, s), trials);
        let b = eval(&self.victim, level, &Condition::attacked(&bb, s), trials);
        let jam = eval(&self.victim, level, &Condition::attacked(&self.jammer, s), trials);
        let ok = worse(m, &b, &jam) && !worse(m, &b, &wb);
        (
            ok,
            format!(
                "{:?} at {level} dB: jammer {:.4} <= black-box {:.4} <= white-box {:.4}",
                self.victim.scenario(),
                jam.value,
                b.value,
                wb.value
            ),
        )
    }
}

fn criterion_1(board: &mut Scoreboard) -> Autoencoder {
    let t = Instant::now();
    let ae = Autoencoder::train(&AutoencoderConfig::default(), &mut rng_from_seed(1)).unwrap();
    let clean = eval(&ae, 7.0, &Condition::clean(), AE_TRIALS);
    let secs = t.elapsed().as_secs_f64();
    let ham = hamming::simulate_bler(7.0, AE_TRIALS as u64, &mut rng_from_seed(6)).unwrap();
    board.report(
        1,
        clean.value <= ham.value && secs <= 300.0,
        format!("autoencoder BLER {:.2e} vs Hamming {:.2e} at 7 dB, {secs:.1}s", clean.value, ham.value),
    );
    ae
}

fn criterion_2(board: &mut Scoreboard, a: &Arena<Autoencoder>) {
    let s = per_tx();
    let mut ok = true;
    let mut detail = String::new();
    for lvl in int_range(6, 14, 1) {
        let clean = eval(&a.victim, lvl, &Condition::clean(), AE_TRIALS);
        let p = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s), AE_TRIALS);
        let u = eval(&a.victim, lvl, &Condition::attacked(&a.uap, s), AE_TRIALS);
        let point_ok = p.value >= 10.0 * clean.floored() && !worse(Metric::Bler, &u, &p);
        if !point_ok || lvl == 10.0 {
            detail = format!(
                "at {lvl} dB clean {:.2e} pgm {:.2e} uap {:.2e}",
                clean.value, p.value, u.value
            );
        }
        ok &= point_ok;
        if !point_ok {
            break;
        }
    }
    board.report(2, ok, detail);
}

fn criterion_3<A: Victim, B: Victim, C: Victim>(
    board: &mut Scoreboard,
    ae: &Arena<A>,
    md: &Arena<B>,
    of: &Arena<C>,
) {
    let parts = [
        ae.jamming_dominance(&int_range(0, 14, 1), AE_TRIALS),
        md.jamming_dominance(&[0.0, 10.0, 16.0], MOD_TRIALS),
        of.jamming_dominance(&int_range(5, 25, 5), OFDM_TRIALS),
    ];
    let ok = parts.iter().all(|p| p.0);
    board.report(3, ok, parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "));
}

fn criterion_4(board: &mut Scoreboard, ae: &Autoencoder, cfg: &AttackConfig) {
    let gan = GanConfig::default();
    let mut f1 = Vec::new();
    let mut bler = Vec::new();
    for alpha in [0.0, 50.0, 500.0] {
        let c = AttackConfig { alpha, ..cfg.clone() };
        let (g, d) = train_joint(ae, &c, &gan, &mut rng_from_seed(2)).unwrap();
        f1.push(discriminator_f1(&d, &g, 4000, &mut rng_from_seed(3)).unwrap());
        bler.push(eval(ae, 8.0, &Condition::attacked(&g, per_tx()), AE_TRIALS));
    }
    let monotone = bler.windows(2).all(|w| !worse(Metric::Bler, &w[1], &w[0]));
    let ok = f1[0].value >= 0.95 && f1[1].value <= 0.70 && f1[2].value <= 0.60 && monotone;
    board.report(
        4,
        ok,
        format!(
            "f1 {:.3}/{:.3}/{:.3}, BLER@8dB {:.2e}/{:.2e}/{:.2e} for alpha 0/50/500",
            f1[0].value, f1[1].value, f1[2].value, bler[0].value, bler[1].value, bler[2].value
        ),
    );
}

fn subtract(victim: &dyn Victim, k: &DefenderKnowledge, a: &dyn Perturber, s: &PhaseSession, lvl: f64) -> Box<dyn rfadv::Defense> {
    let nv = victim.noise_variance(lvl).unwrap();
    subtract_defense(k, Some(a), s, nv, victim.signal_len(), &mut rng_from_seed(8)).unwrap()
}

fn criterion_5(board: &mut Scoreboard, a: &Arena<Autoencoder>) {
    let s = fixed_session();
    let k = DefenderKnowledge::ad_hoc(10_000);
    let mut ok = true;
    let mut detail = String::new();
    for lvl in [6.0, 8.0, 10.0] {
        let clean = eval(&a.victim, lvl, &Condition::clean(), AE_TRIALS);
        let du = subtract(&a.victim, &k, &a.uap, &s, lvl);
        let dp = subtract(&a.victim, &k, &a.pgm, &s, lvl);
        let u_def = eval(&a.victim, lvl, &Condition::attacked(&a.uap, s).defended(du.as_ref()), AE_TRIALS);
        let p_att = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s), AE_TRIALS);
        let p_def = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s).defended(dp.as_ref()), AE_TRIALS);
        let point_ok = u_def.value <= 2.0 * clean.floored()
            && p_att.value / p_def.floored() <= 3.0
            && p_def.value >= 10.0 * clean.floored();
        ok &= point_ok;
        if !point_ok || lvl == 8.0 {
            detail = format!(
                "at {lvl} dB clean {:.2e}, UAP defended {:.2e}, PGM attacked {:.2e} defended {:.2e}",
                clean.value, u_def.value, p_att.value, p_def.value
            );
        }
        if !point_ok {
            break;
        }
    }
    board.report(5, ok, detail);
}

fn criterion_6(board: &mut Scoreboard, a: &Arena<Autoencoder>) {
    let g0 = pgm(&a.victim, &AttackConfig { beta: 0.0, ..a.cfg.clone() }, 20, 2);
    let s = fixed_session();
    let mut ok = true;
    let mut detail = String::new();
    for lvl in [6.0, 8.0, 10.0] {
        let clean = eval(&a.victim, lvl, &Condition::clean(), AE_TRIALS);
        let d0 = subtract(&a.victim, &DefenderKnowledge::perfect_aware(10_000, &g0), &g0, &s, lvl);
        let d1 = subtract(&a.victim, &DefenderKnowledge::perfect_aware(10_000, &a.pgm), &a.pgm, &s, lvl);
        let r0 = eval(&a.victim, lvl, &Condition::attacked(&g0, s).defended(d0.as_ref()), AE_TRIALS);
        let r1 = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s).defended(d1.as_ref()), AE_TRIALS);
        let point_ok = r0.value <= 2.0 * clean.floored() && r1.value >= 5.0 * clean.floored();
        ok &= point_ok;
        if !point_ok || lvl == 8.0 {
            detail = format!(
                "at {lvl} dB clean {:.2e}, perfect-aware vs beta=0 {:.2e}, vs beta={} {:.2e}",
                clean.value, r0.value, a.cfg.beta, r1.value
            );
        }
        if !point_ok {
            break;
        }
    }
    board.report(6, ok, detail);
}

fn criterion_7(board: &mut Scoreboard, a: &Arena<Autoencoder>) {
    let lvl = 10.0;
    let s = fixed_session();
    let own = pgm(&a.victim, &a.cfg, 20, 3);
    let est = estimate_via_pilots(
        Some(&a.uap),
        &s,
        a.victim.noise_variance(lvl).unwrap(),
        a.victim.signal_len(),
        10_000,
        &mut rng_from_seed(9),
    )
    .unwrap();
    let acfg = AdvTrainConfig::default();
    let hp = adversarial_training(&a.victim, AdversarialSource::Generator(&own), &acfg, &mut rng_from_seed(31)).unwrap();
    let hu = adversarial_training(&a.victim, AdversarialSource::Estimate(&est.delta_hat), &acfg, &mut rng_from_seed(30))
        .unwrap();
    let vp = WithReceiver::new(&a.victim, hp).unwrap();
    let vu = WithReceiver::new(&a.victim, hu).unwrap();
    let cp = eval(&vp, lvl, &Condition::clean(), AE_TRIALS);
    let ap = eval(&vp, lvl, &Condition::attacked(&a.pgm, s), AE_TRIALS);
    let cu = eval(&vu, lvl, &Condition::clean(), AE_TRIALS);
    let au = eval(&vu, lvl, &Condition::attacked(&a.uap, s), AE_TRIALS);
    let ok = ap.value >= 100.0 * cp.floored() && au.value <= 5.0 * cu.floored();
    board.report(
        7,
        ok,
        format!(
            "at {lvl} dB hardened clean {:.2e} vs PGM {:.2e}; hardened clean {:.2e} vs UAP {:.2e}",
            cp.value, ap.value, cu.value, au.value
        ),
    );
}

fn criterion_8(board: &mut Scoreboard, a: &Arena<ModulationSystem>) {
    let lvl = 10.0;
    let s = fixed_session();
    let k = DefenderKnowledge::ad_hoc(10_000);
    let clean = eval(&a.victim, lvl, &Condition::clean(), MOD_TRIALS);
    let dp = subtract(&a.victim, &k, &a.pgm, &s, lvl);
    let du = subtract(&a.victim, &k, &a.uap, &s, lvl);
    let p = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s).defended(dp.as_ref()), MOD_TRIALS);
    let u = eval(&a.victim, lvl, &Condition::attacked(&a.uap, s).defended(du.as_ref()), MOD_TRIALS);
    let ok = p.value <= clean.value - 0.25 && u.value >= clean.value - 0.10;
    board.report(
        8,
        ok,
        format!("accuracy at {lvl} dB under subtraction: clean {:.3}, PGM {:.3}, UAP {:.3}", clean.value, p.value, u.value),
    );
}

fn criterion_9(board: &mut Scoreboard, a: &Arena<OfdmSystem>) {
    let lvl = 20.0;
    let s = fixed_session();
    let nv = a.victim.noise_variance(lvl).unwrap();
    let k = DefenderKnowledge::ad_hoc(10_000);
    let est = estimate_via_pilots(None, &s, nv, a.victim.signal_len(), 10_000, &mut rng_from_seed(8)).unwrap();
    let idle = SubtractEstimate::new(&est.delta_hat);
    let clean_def = eval(&a.victim, lvl, &Condition::clean().defended(&idle), OFDM_TRIALS);
    let dp = subtract(&a.victim, &k, &a.pgm, &s, lvl);
    let p = eval(&a.victim, lvl, &Condition::attacked(&a.pgm, s).defended(dp.as_ref()), OFDM_TRIALS);
    board.report(
        9,
        p.value >= 5.0 * clean_def.floored(),
        format!("BER at {lvl} dB: defended clean {:.2e}, defended PGM {:.2e}", clean_def.value, p.value),
    );
}

fn criterion_10<A: Victim, B: Victim, C: Victim>(
    board: &mut Scoreboard,
    ae: &Arena<A>,
    md: &Arena<B>,
    of: &Arena<C>,
) {
    let parts = [
        ae.black_box_band(8.0, AE_TRIALS),
        md.black_box_band(10.0, MOD_TRIALS),
        of.black_box_band(20.0, OFDM_TRIALS),
    ];
    let ok = parts.iter().all(|p| p.0);
    board.report(10, ok, parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "));
}

fn weighted_sum(y: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let w = Array2::from_shape_fn(y.dim(), |(i, j)| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.4);
    Ok(((y * &w).sum(), w))
}

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn gradient_suite() -> GradCheckReport {
    let eps = 1e-4;
    let build = |b: ModelBuilder, seed| -> Model<f64> { b.build(&mut rng_from_seed(seed)).unwrap() };
    let mut r = GradCheckReport::default();
    let mut add = |m: &Model<f64>, x: Array2<f64>| {
        let rep = check_model(m, &x, weighted_sum, eps).unwrap();
        r = std::mem::take(&mut r).merge(rep);
    };
    add(&build(ModelBuilder::new(5).dense(4), 1), random(3, 5, 2));
    for (i, f) in [
        Activation::Relu,
        Activation::leaky_relu(),
        Activation::elu(),
        Activation::Sigmoid,
        Activation::Softmax,
    ]
    .into_iter()
    .enumerate()
    {
        add(&build(ModelBuilder::new(4).dense(6).activation(f).dense(3), 3 + i as u64), random(3, 4, 10 + i as u64));
    }
    add(
        &build(ModelBuilder::new(42).volume(2, 3, 7).conv2d(3, [2, 3], [1, 2], [1, 1]).elu().conv2d(2, [2, 2], [2, 1], [0, 1]), 20),
        random(2, 42, 21),
    );
    add(&build(ModelBuilder::new(6).dense(6).power_norm(3.0), 22), random(4, 6, 23));

    let m = build(ModelBuilder::new(6).dense(8).relu().dense(4), 30);
    let labels = vec![0, 3, 1, 2];
    r = r.merge(check_model(&m, &random(4, 6, 31), |y| softmax_cross_entropy(y, &labels), eps).unwrap());
    let target = random(4, 4, 32).mapv(|v| f64::from(u8::from(v > 0.0)));
    r = r.merge(check_model(&m, &random(4, 6, 33), |y| mse(y, &target), eps).unwrap());
    let d = build(ModelBuilder::new(6).dense(4).relu().dense(1), 34);
    let bl = [1.0, 0.0, 1.0, 0.0];
    r = r.merge(check_model(&d, &random(4, 6, 35), |y| bce_with_logits(y, &bl), eps).unwrap());

    // Remap clip, above the budget so the projection is active.
    let raw: Vec<f64> = random(1, 8, 40).iter().map(|v| 2.0 * v).collect();
    let up: Vec<f64> = random(1, 8, 41).iter().copied().collect();
    let p = 0.5;
    let clipped_dot = |v: &[f64]| {
        let mut c = v.to_vec();
        clip_to_budget(&mut c, p);
        c.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    r = r.merge(GradCheckReport::compare("remap", &clip_backward(&raw, &up, p), &finite_difference(clipped_dot, &raw, eps)));

    // Rotation: the input gradient is the inverse rotation of the upstream.
    let theta = 0.7;
    let rotated_dot = |v: &[f64]| {
        let mut c = v.to_vec();
        rotate_in_place(&mut c, theta);
        c.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut back = up.clone();
    rotate_in_place(&mut back, -theta);
    r = r.merge(GradCheckReport::compare("rotation", &back, &finite_difference(rotated_dot, &raw, eps)));

    let disc = build(ModelBuilder::new(8).dense(5).relu().dense(1).sigmoid(), 42);
    let (_, g) = undetect_regularizer(&disc, &raw).unwrap();
    let fd = finite_difference(|v| undetect_regularizer(&disc, v).unwrap().0, &raw, eps);
    r.merge(GradCheckReport::compare("undetect", &g, &fd))
}

fn criterion_11(board: &mut Scoreboard, g: &GeneratorModel) {
    let grads = gradient_suite();
    let mut rng = rng_from_seed(50);
    let mut rot_err: f64 = 0.0;
    for _ in 0..1000 {
        let mut v: Vec<f64> = (0..14).map(|_| rng.random_range(-3.0..3.0)).collect();
        let before: f64 = v.iter().map(|x| x * x).sum();
        rotate_in_place(&mut v, rng.random_range(0.0..std::f64::consts::TAU));
        let after: f64 = v.iter().map(|x| x * x).sum();
        rot_err = rot_err.max((after - before).abs() / before);
    }
    let samples = g.sample_batch(10_000, &mut rng).unwrap();
    let p = g.budget();
    let max_norm = samples
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>())
        .fold(0.0, f64::max);
    let ok = grads.max_rel_error <= 1e-4 && rot_err <= 1e-9 && max_norm <= p * (1.0 + 1e-6);
    board.report(
        11,
        ok,
        format!(
            "{} gradients, max rel error {:.1e}; rotation norm error {rot_err:.1e}; max |delta|^2 / p = {:.7}",
            grads.checked,
            grads.max_rel_error,
            max_norm / p
        ),
    );
}

fn criterion_12(board: &mut Scoreboard) {
    let sweep = SweepSpec {
        axis: SweepAxis::Level,
        values: vec![4.0, 8.0],
        range: None,
        level_db: None,
    };
    let mut cfg = ExperimentConfig::new(Scenario::Autoencoder, sweep, 5000);
    cfg.seed = 1234;
    cfg.attack = AttackKind::Pgm;
    cfg.attack_options.epochs = 20;
    cfg.defense = DefenseSpec::Subtract {
        knowledge: rfadv::KnowledgeKind::AdHoc,
        pilot_count: 2000,
    };
    let a = run(&cfg).unwrap().to_csv();
    let b = run(&cfg).unwrap().to_csv();
    board.report(12, a == b && !a.is_empty(), format!("two runs, {} CSV bytes, identical: {}", a.len(), a == b));
}

fn main() {
    let start = Instant::now();
    let mut board = Scoreboard { failed: 0 };

    let ae = criterion_1(&mut board);
    let ae = Arena::new(ae, AttackConfig::desk(Scenario::Autoencoder));
    criterion_2(&mut board, &ae);
    let md = Arena::new(
        ModulationSystem::train(&ClassifierConfig::desk(), &mut rng_from_seed(1)).unwrap(),
        AttackConfig::desk(Scenario::Modulation),
    );
    let of = Arena::new(
        OfdmSystem::train(&OfdmConfig::default(), &mut rng_from_seed(1)).unwrap(),
        AttackConfig::desk(Scenario::Ofdm),
    );
    criterion_3(&mut board, &ae, &md, &of);
    criterion_4(&mut board, &ae.victim, &ae.cfg);
    criterion_5(&mut board, &ae);
    criterion_6(&mut board, &ae);
    criterion_7(&mut board, &ae);
    criterion_8(&mut board, &md);
    criterion_9(&mut board, &of);
    criterion_10(&mut board, &ae, &md, &of);
    criterion_11(&mut board, &ae.pgm);
    criterion_12(&mut board);

    println!("acceptance: {} failed, {:.0}s", board.failed, start.elapsed().as_secs_f64());
    if board.failed > 0 {
        std::process::exit(1);
    }
}
