//! Analytic gradients against central finite differences, for every layer
//! type and loss.

use ndarray::Array2;
use rand::Rng;
use rfadv::nn::gradcheck::{check_model, finite_difference, GradCheckReport};
use rfadv::nn::loss::{bce_with_logits, mse, softmax_cross_entropy};
use rfadv::nn::{Activation, Model, ModelBuilder};
use rfadv::rng_from_seed;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn weighted_sum_loss(y: &Array2<f64>) -> rfadv::Result<(f64, Array2<f64>)> {
    // fixed pseudo-random weights so every output coordinate matters
    let w = Array2::from_shape_fn(y.dim(), |(i, j)| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.4);
    Ok(((y * &w).sum(), w))
}

fn assert_ok(what: &str, r: GradCheckReport) {
    assert!(r.checked > 0);
    assert!(r.max_rel_error <= TOL, "{what}: max rel error {} at {}", r.max_rel_error, r.worst);
}

fn check_activation(f: Activation, seed: u64) {
    let m: Model<f64> = ModelBuilder::new(4)
        .dense(6)
        .activation(f)
        .dense(3)
        .build(&mut rng_from_seed(seed))
        .unwrap();
    let x = random_input(3, 4, seed + 100);
    assert_ok(&format!("{f:?}"), check_model(&m, &x, weighted_sum_loss, EPS).unwrap());
}

#[test]
fn dense_layer() {
    let m: Model<f64> = ModelBuilder::new(5).dense(4).build(&mut rng_from_seed(1)).unwrap();
    assert_ok("dense", check_model(&m, &random_input(3, 5, 2), weighted_sum_loss, EPS).unwrap());
}

#[test]
fn every_activation() {
    check_activation(Activation::Relu, 3);
    check_activation(Activation::leaky_relu(), 4);
    check_activation(Activation::elu(), 5);
    check_activation(Activation::Sigmoid, 6);
    check_activation(Activation::Softmax, 7);
}

#[test]
fn conv2d_with_stride_and_padding() {
    let m: Model<f64> = ModelBuilder::new(2 * 3 * 7)
        .volume(2, 3, 7)
        .conv2d(3, [2, 3], [1, 2], [1, 1])
        .elu()
        .conv2d(2, [2, 2], [2, 1], [0, 1])
        .build(&mut rng_from_seed(8))
        .unwrap();
    assert_ok("conv2d", check_model(&m, &random_input(2, 42, 9), weighted_sum_loss, EPS).unwrap());
}

#[test]
fn power_norm_layer() {
    let m: Model<f64> = ModelBuilder::new(6).dense(6).power_norm(3.0).build(&mut rng_from_seed(10)).unwrap();
    assert_ok("power_norm", check_model(&m, &random_input(4, 6, 11), weighted_sum_loss, EPS).unwrap());
}

#[test]
fn random_two_layer_net_with_cross_entropy() {
    let m: Model<f64> = ModelBuilder::new(6).dense(8).relu().dense(4).build(&mut rng_from_seed(12)).unwrap();
    let labels = vec![0, 3, 1, 2, 3];
    let r = check_model(&m, &random_input(5, 6, 13), |y| softmax_cross_entropy(y, &labels), EPS).unwrap();
    assert_ok("two-layer ce", r);
}

#[test]
fn mse_and_bce_losses() {
    let m: Model<f64> = ModelBuilder::new(5).dense(3).sigmoid().build(&mut rng_from_seed(14)).unwrap();
    let target = random_input(4, 3, 15).mapv(|v| (v > 0.0) as u8 as f64);
    let r = check_model(&m, &random_input(4, 5, 16), |y| mse(y, &target), EPS).unwrap();
    assert_ok("mse", r);

    let d: Model<f64> = ModelBuilder::new(5).dense(4).relu().dense(1).build(&mut rng_from_seed(17)).unwrap();
    let labels = [1.0, 0.0, 1.0, 0.0];
    let r = check_model(&d, &random_input(4, 5, 18), |y| bce_with_logits(y, &labels), EPS).unwrap();
    assert_ok("bce", r);
}

#[test]
fn loss_gradients_against_fd() {
    let logits = random_input(3, 5, 19);
    let labels = [4, 0, 2];
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let fd = finite_difference(
        |v| softmax_cross_entropy(&Array2::from_shape_vec((3, 5), v.to_vec()).unwrap(), &labels).unwrap().0,
        logits.as_slice().unwrap(),
        EPS,
    );
    assert_ok("ce", GradCheckReport::compare("ce", g.as_slice().unwrap(), &fd));
}

#[test]
fn classifier_shaped_network_in_f64() {
    // Reduced copy of the modulation classifier topology.
    let m: Model<f64> = ModelBuilder::new(2 * 10)
        .volume(1, 2, 10)
        .conv2d(3, [1, 3], [1, 1], [0, 2])
        .leaky_relu()
        .conv2d(2, [2, 3], [1, 1], [0, 2])
        .leaky_relu()
        .dense(5)
        .leaky_relu()
        .dense(4)
        .build(&mut rng_from_seed(20))
        .unwrap();
    let labels = vec![1, 3];
    let r = check_model(&m, &random_input(2, 20, 21), |y| softmax_cross_entropy(y, &labels), EPS).unwrap();
    assert_ok("classifier", r);
}

#[test]
fn remap_clip_gradient() {
    let raw: Vec<f64> = random_input(1, 8, 22).iter().map(|v| 2.0 * v).collect();
    let up: Vec<f64> = random_input(1, 8, 23).iter().copied().collect();
    let p = 0.5;
    let fd = finite_difference(
        |v| {
            let mut c = v.to_vec();
            rfadv::attack::clip_to_budget(&mut c, p);
            c.iter().zip(&up).map(|(a, b)| a * b).sum()
        },
        &raw,
        EPS,
    );
    let analytic = rfadv::attack::clip_backward(&raw, &up, p);
    assert_ok("remap", GradCheckReport::compare("remap", &analytic, &fd));
}

#[test]
fn rotation_gradient_is_inverse_rotation() {
    let x: Vec<f64> = random_input(1, 10, 24).iter().copied().collect();
    let up: Vec<f64> = random_input(1, 10, 25).iter().copied().collect();
    let theta = -2.3;
    let fd = finite_difference(
        |v| {
            let mut c = v.to_vec();
            rfadv::signal::rotate_in_place(&mut c, theta);
            c.iter().zip(&up).map(|(a, b)| a * b).sum()
        },
        &x,
        EPS,
    );
    let mut back = up.clone();
    rfadv::signal::rotate_in_place(&mut back, -theta);
    assert_ok("rotation", GradCheckReport::compare("rotation", &back, &fd));
}

#[test]
fn undetect_regularizer_gradient() {
    let d: Model<f64> = ModelBuilder::new(6).dense(5).relu().dense(1).sigmoid().build(&mut rng_from_seed(26)).unwrap();
    let c: Vec<f64> = random_input(1, 6, 27).iter().copied().collect();
    let (_, g) = rfadv::gan::undetect_regularizer(&d, &c).unwrap();
    let fd = finite_difference(|v| rfadv::gan::undetect_regularizer(&d, v).unwrap().0, &c, EPS);
    assert_ok("undetect", GradCheckReport::compare("undetect", &g, &fd));
}
