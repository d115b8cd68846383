//! Defense behaviour against generators trained on the autoencoder.

use ndarray::Axis;
use rfadv::attack::{train_single_uap, AttackConfig, AttackData, PgmTrainer};
use rfadv::defense::{
    adversarial_training, estimate_via_pilots, subtract_defense, AdvTrainConfig, AdversarialSource, DefenderKnowledge,
};
use rfadv::systems::autoencoder::{Autoencoder, AutoencoderConfig};
use rfadv::systems::WithReceiver;
use rfadv::*;
use std::sync::OnceLock;

const TRIALS: usize = 100_000;

struct Setup {
    ae: Autoencoder,
    pgm: GeneratorModel,
    pgm_beta0: GeneratorModel,
    own: GeneratorModel,
    uap: SingleUap,
}

fn generator(ae: &Autoencoder, cfg: &AttackConfig, seed: u64) -> GeneratorModel {
    let data = AttackData::draw(ae, cfg, &mut rng_from_seed(20)).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut t = PgmTrainer::with_data(ae, cfg, data, &mut rng).unwrap();
    for _ in 0..cfg.epochs {
        t.epoch(None, &mut rng).unwrap();
    }
    t.finish().unwrap()
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let ae = Autoencoder::train(&AutoencoderConfig::default(), &mut rng_from_seed(1)).unwrap();
        let cfg = AttackConfig::desk(Scenario::Autoencoder);
        let pgm = generator(&ae, &cfg, 2);
        let pgm_beta0 = generator(&ae, &AttackConfig { beta: 0.0, ..cfg.clone() }, 2);
        let own = generator(&ae, &cfg, 3);
        let uap = train_single_uap(&ae, &cfg, &mut rng_from_seed(4)).unwrap();
        Setup {
            ae,
            pgm,
            pgm_beta0,
            own,
            uap,
        }
    })
}

fn session() -> PhaseSession {
    PhaseSession::start(PhasePolicy::FixedPerSession, &mut rng_from_seed(7))
}

fn spread(g: &GeneratorModel) -> f64 {
    let s = g.sample_batch(1000, &mut rng_from_seed(99)).unwrap();
    let m = s.mean_axis(Axis(0)).unwrap();
    s.rows()
        .into_iter()
        .map(|r| r.iter().zip(m.iter()).map(|(a, b)| f64::from(a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / 1000.0
}

#[test]
fn distance_term_yields_diverse_perturbations() {
    let s = setup();
    assert!(spread(&s.pgm) > spread(&s.pgm_beta0));
    let rows = s.pgm.sample_batch(10_000, &mut rng_from_seed(5)).unwrap();
    for w in rows.axis_iter(Axis(0)).collect::<Vec<_>>().windows(2) {
        let d: f32 = w[0].iter().zip(w[1].iter()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(d > 0.0);
    }
}

#[test]
fn trained_attack_is_robust_to_phase() {
    let s = setup();
    let rotated = evaluate(
        &s.ae,
        8.0,
        &Condition::attacked(&s.pgm, PhaseSession::with_theta(PhasePolicy::PerTransmission, 0.0)),
        TRIALS,
        3,
    )
    .unwrap();
    let aligned = evaluate(&s.ae, 8.0, &Condition::attacked(&s.pgm, PhaseSession::with_theta(PhasePolicy::None, 0.0)), TRIALS, 3)
        .unwrap();
    assert!((rotated.value - aligned.value).abs() <= 0.2 * aligned.value, "{} vs {}", rotated.value, aligned.value);
}

#[test]
fn pilots_poorly_estimate_a_diverse_generator() {
    let s = setup();
    let nv = s.ae.noise_variance(8.0).unwrap();
    let est = estimate_via_pilots(Some(&s.pgm), &session(), nv, 14, 10_000, &mut rng_from_seed(8)).unwrap();
    assert!(est.residual_power >= 0.5 * est.perturbation_power);
}

#[test]
fn structure_aware_subtraction_does_not_restore_clean() {
    let s = setup();
    let sess = session();
    let lvl = 8.0;
    let clean = evaluate(&s.ae, lvl, &Condition::clean(), TRIALS, 3).unwrap();
    let d = subtract_defense(
        &DefenderKnowledge::structure_aware(10_000, s.own.clone()),
        Some(&s.pgm),
        &sess,
        s.ae.noise_variance(lvl).unwrap(),
        14,
        &mut rng_from_seed(8),
    )
    .unwrap();
    let defended = evaluate(&s.ae, lvl, &Condition::attacked(&s.pgm, sess).defended(d.as_ref()), TRIALS, 3).unwrap();
    assert!(defended.value > 2.0 * clean.floored(), "{} vs clean {}", defended.value, clean.value);
}

#[test]
fn perfect_knowledge_helps_less_against_the_distance_term() {
    let s = setup();
    let sess = session();
    let lvl = 8.0;
    let nv = s.ae.noise_variance(lvl).unwrap();
    let run = |g: &GeneratorModel| {
        let d = subtract_defense(&DefenderKnowledge::perfect_aware(10_000, g), Some(g), &sess, nv, 14, &mut rng_from_seed(8))
            .unwrap();
        evaluate(&s.ae, lvl, &Condition::attacked(g, sess).defended(d.as_ref()), TRIALS, 3).unwrap()
    };
    let clean = evaluate(&s.ae, lvl, &Condition::clean(), TRIALS, 3).unwrap();
    let r0 = run(&s.pgm_beta0);
    let r1 = run(&s.pgm);
    assert!(r0.value <= 2.0 * clean.floored());
    assert!(r1.ci_low > r0.ci_high);
}

#[test]
fn generator_beats_single_uap_under_subtraction() {
    let s = setup();
    let sess = session();
    let lvl = 8.0;
    let nv = s.ae.noise_variance(lvl).unwrap();
    let k = DefenderKnowledge::ad_hoc(10_000);
    let du = subtract_defense(&k, Some(&s.uap), &sess, nv, 14, &mut rng_from_seed(8)).unwrap();
    let dp = subtract_defense(&k, Some(&s.pgm), &sess, nv, 14, &mut rng_from_seed(8)).unwrap();
    let u = evaluate(&s.ae, lvl, &Condition::attacked(&s.uap, sess).defended(du.as_ref()), TRIALS, 3).unwrap();
    let p = evaluate(&s.ae, lvl, &Condition::attacked(&s.pgm, sess).defended(dp.as_ref()), TRIALS, 3).unwrap();
    assert!(p.ci_low > u.ci_high, "pgm {} uap {}", p.value, u.value);
}

#[test]
fn hardening_keeps_clean_performance() {
    let s = setup();
    let cfg = AdvTrainConfig::default();
    let original = evaluate(&s.ae, 6.0, &Condition::clean(), TRIALS, 3).unwrap();
    for (name, source) in [
        ("own generator", AdversarialSource::Generator(&s.own)),
        ("no samples", AdversarialSource::Nothing),
    ] {
        let model = adversarial_training(&s.ae, source, &cfg, &mut rng_from_seed(31)).unwrap();
        let hardened = WithReceiver::new(&s.ae, model).unwrap();
        let clean = evaluate(&hardened, 6.0, &Condition::clean(), TRIALS, 3).unwrap();
        assert!(clean.value <= 1.2 * original.value, "{name}: {} vs {}", clean.value, original.value);
    }
}
