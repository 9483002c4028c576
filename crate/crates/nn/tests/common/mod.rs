#![allow(dead_code)]

use footlift_nn::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar readout `Σ w_i · out_i` with fixed random weights, so every output
/// coordinate contributes to the checked gradient.
pub fn readout(tape: &Tape, out: Var, weights: &[f64]) -> f64 {
    tape.value(out).values().iter().zip(weights).map(|(a, b)| a * b).sum()
}
