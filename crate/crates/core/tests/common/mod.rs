#![allow(dead_code)]

use cass_core::losses::Batch;
use cass_core::model::{CassModel, Mode, NetworkSpec};
use cass_core::nn::Activation;
use cass_core::LossWeights;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 4×4 inputs, one block of 2 channels, latent 3: a few hundred parameters per network.
pub fn toy_spec() -> NetworkSpec {
    NetworkSpec {
        input_shape: (4, 4),
        latent_dim: 3,
        channel_schedule: vec![2],
        nonlinearity: Activation::Tanh,
        discriminator: true,
    }
}

pub fn toy_model(mode: Mode, seed: u64) -> CassModel<f64> {
    CassModel::build(&toy_spec(), 2, mode, LossWeights::defaults(2), seed).unwrap()
}

pub fn random_tensor(shape: (usize, usize, usize, usize), rng: &mut impl Rng) -> Array4<f64> {
    Array4::from_shape_fn(shape, |_| rng.random::<f64>())
}

pub fn toy_batch(seed: u64, batch: usize) -> Batch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = toy_spec().input_shape;
    let targets: Vec<_> = (0..2).map(|_| random_tensor((batch, 1, h, w), &mut rng)).collect();
    Batch {
        mixture: &targets[0] + &targets[1],
        targets,
    }
}
