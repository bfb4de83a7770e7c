//! Finite-difference checks of the layers used by the video and audio heads.

use ndarray::Array2;
use rand::Rng;
use smallclip::nn::gradcheck::DEFAULT_EPSILON;
use smallclip::nn::{grad_check, Layer, Linear, Lstm, MlpHead};
use smallclip::rng::rng_from_seed;

fn check<L: Layer>(name: &str, layer: &mut L, input: &Array2<f64>) {
    let err = grad_check(layer, input, DEFAULT_EPSILON, 0).expect("grad check");
    println!("{name:<8} max relative error {err:.2e}");
}

fn main() {
    let mut rng = rng_from_seed(3);
    let mut input = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0));
    let (a, b, c) = (input(6, 8), input(6, 8), input(5, 8));

    let mut rng = rng_from_seed(4);
    check("linear", &mut Linear::new("linear", 8, 4, &mut rng), &a);
    check("mlp", &mut MlpHead::new("mlp", 8, 6, 4, 0.5, &mut rng).unwrap(), &b);
    // Rows of the LSTM input are time steps.
    check("lstm", &mut Lstm::new("lstm", 8, 5, &mut rng), &c);
}
