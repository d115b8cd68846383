use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rfadv::attack::{AttackConfig, PgmTrainer};
use rfadv::nn::{Model, ModelBuilder};
use rfadv::systems::autoencoder::{Autoencoder, AutoencoderConfig};
use rfadv::systems::substitute::{substitute_layers, ArchScale};
use rfadv::{evaluate, rng_from_seed, Condition, Perturber, Scenario};
use std::hint::black_box;

fn small_ae() -> Autoencoder {
    let cfg = AutoencoderConfig {
        steps: 200,
        ..AutoencoderConfig::default()
    };
    Autoencoder::train(&cfg, &mut rng_from_seed(1)).unwrap()
}

fn layers(c: &mut Criterion) {
    let mut rng = rng_from_seed(2);
    let dense: Model<f32> = ModelBuilder::new(256).dense(512).leaky_relu().dense(256).build(&mut rng).unwrap();
    let conv: Model<f32> = substitute_layers(Scenario::Ofdm, 256, 128, ArchScale::Desk).build(&mut rng).unwrap();
    let x = Array2::from_elem((128, 256), 0.1f32);

    c.bench_function("dense 256-512-256 forward, batch 128", |b| b.iter(|| dense.forward(black_box(&x)).unwrap()));
    c.bench_function("ofdm substitute forward+backward, batch 128", |b| {
        b.iter(|| {
            let tape = conv.forward_cached(black_box(&x), conv.layers().len()).unwrap();
            let g = Array2::from_elem(tape.output().dim(), 1.0f32);
            conv.backward(&tape, &g, true).unwrap()
        })
    });
}

fn attack(c: &mut Criterion) {
    let ae = small_ae();
    let cfg = AttackConfig {
        epochs: 1,
        ..AttackConfig::default()
    };
    let mut rng = rng_from_seed(3);
    let mut trainer = PgmTrainer::new(&ae, &cfg, &mut rng).unwrap();
    let batch: Vec<usize> = (0..cfg.batch_size).collect();
    c.bench_function("pgm step, autoencoder, batch 128", |b| {
        b.iter(|| trainer.step(black_box(&batch), None, &mut rng).unwrap())
    });
    let g = trainer.finish().unwrap();
    c.bench_function("pgm sample 1024", |b| b.iter(|| g.sample_batch(1024, &mut rng).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let ae = small_ae();
    c.bench_function("autoencoder clean evaluation, 10k trials", |b| {
        b.iter(|| evaluate(&ae, 6.0, &Condition::clean(), 10_000, 7).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = layers, attack, monte_carlo
}
criterion_main!(benches);
