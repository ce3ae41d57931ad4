mod common;

use cass_core::model::{load_model, save_model, CassModel, ComponentModel, Mode, NetworkSpec};
use cass_core::nn::{Activation, Params};
use cass_core::{CassError, LossWeights};
use common::{random_tensor, toy_model};
use ndarray::Array4;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv(i: usize, o: usize, k: usize) -> usize {
    o * i * k * k + o
}

fn linear(i: usize, o: usize) -> usize {
    i * o + o
}

fn res(i: usize, o: usize, stride: usize) -> usize {
    let skip = if stride != 1 || i != o { conv(i, o, 1) } else { 0 };
    conv(i, o, 3) + conv(o, o, 3) + skip
}

fn trunk(ch: &[usize]) -> usize {
    let mut prev = ch[0];
    let mut n = conv(1, ch[0], 3);
    for &c in ch {
        n += res(prev, c, 2);
        prev = c;
    }
    n
}

/// Parameter counts of (encoder, decoder, discriminator) derived by hand from
/// the layer layout.
fn expected_counts(spec: &NetworkSpec) -> (usize, usize, usize) {
    let ch = &spec.channel_schedule;
    let (fh, fw) = spec.feature_hw();
    let top = *ch.last().unwrap();
    let flat = top * fh * fw;
    let encoder = trunk(ch) + linear(flat, spec.latent_dim);
    let n = ch.len();
    let mut decoder = linear(spec.latent_dim, flat) + conv(ch[0], 1, 3);
    for i in 0..n {
        let cout = if i + 1 < n { ch[n - 2 - i] } else { ch[0] };
        decoder += res(ch[n - 1 - i], cout, 1);
    }
    let disc = trunk(ch) + linear(flat, 1);
    (encoder, decoder, disc)
}

fn spec(h: usize, w: usize, channels: &[usize], latent: usize) -> NetworkSpec {
    NetworkSpec {
        input_shape: (h, w),
        latent_dim: latent,
        channel_schedule: channels.to_vec(),
        nonlinearity: Activation::LeakyRelu,
        discriminator: true,
    }
}

#[test]
fn parameter_count_matches_closed_form() {
    for s in [
        spec(4, 4, &[2], 3),
        spec(65, 16, &[8, 16, 16, 16], 32),
        spec(129, 33, &[16, 32, 64, 64], 128),
        spec(7, 5, &[3, 3], 4),
    ] {
        let c = ComponentModel::<f32>::build(&s, 0).unwrap();
        let (e, d, disc) = expected_counts(&s);
        assert_eq!(c.encoder.param_count(), e, "{s:?}");
        assert_eq!(c.decoder.param_count(), d, "{s:?}");
        assert_eq!(c.discriminator_params(), disc, "{s:?}");
        assert_eq!(c.param_count(), e + d + disc);
    }
}

#[test]
fn toy_networks_stay_small_enough_for_gradient_checks() {
    let c = toy_model(Mode::Cass, 0).components.remove(0);
    assert!(c.encoder.param_count() <= 500);
    assert!(c.decoder.param_count() <= 500);
    assert!(c.discriminator_params() <= 500);
}

#[test]
fn construction_is_deterministic_in_the_seed() {
    let s = spec(17, 9, &[4, 8], 6);
    let a = CassModel::<f32>::build(&s, 2, Mode::CassCross, LossWeights::defaults(2), 7).unwrap();
    let b = CassModel::<f32>::build(&s, 2, Mode::CassCross, LossWeights::defaults(2), 7).unwrap();
    let c = CassModel::<f32>::build(&s, 2, Mode::CassCross, LossWeights::defaults(2), 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a.components[0], a.components[1], "components get distinct streams");
}

#[test]
fn autoencoder_init_does_not_depend_on_the_discriminator() {
    let s = spec(9, 9, &[2, 2], 5);
    let with = CassModel::<f64>::build(&s, 2, Mode::Cass, LossWeights::defaults(2), 3).unwrap();
    let without = CassModel::<f64>::build(&s, 2, Mode::Baseline, LossWeights::defaults(2), 3).unwrap();
    for (a, b) in with.components.iter().zip(&without.components) {
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.decoder, b.decoder);
        assert!(b.discriminator.is_none());
    }
}

#[test]
fn latent_must_reduce_dimension() {
    let err = ComponentModel::<f32>::build(&spec(4, 4, &[2], 16), 0).unwrap_err();
    assert!(matches!(err, CassError::Config(_)), "{err}");
    assert!(ComponentModel::<f32>::build(&spec(4, 4, &[2], 15), 0).is_ok());
    assert!(ComponentModel::<f32>::build(&spec(4, 4, &[2], 0), 0).is_err());
}

#[test]
fn output_heads_are_not_hidden_activations() {
    let mut s = spec(8, 8, &[2], 4);
    s.nonlinearity = Activation::Sigmoid;
    assert!(ComponentModel::<f32>::build(&s, 0).is_err());
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = toy_model(Mode::Cass, 0);
    let x = Array4::<f64>::zeros((2, 1, 5, 4));
    assert!(matches!(model.components[0].reconstruct(&x), Err(CassError::Shape { .. })));
    assert!(model.components[0].discriminate(&x).is_err());
    let x = Array4::<f64>::zeros((2, 2, 4, 4));
    assert!(model.components[0].encode(&x).is_err());
}

#[test]
fn fresh_discriminators_are_undecided_on_random_inputs() {
    let s = spec(33, 17, &[4, 8, 8], 16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let model = CassModel::<f32>::build(&s, 2, Mode::Cass, LossWeights::defaults(2), seed).unwrap();
        let x = random_tensor((8, 1, 33, 17), &mut rng).mapv(|v| v as f32);
        for c in &model.components {
            let p = c.discriminate(&x).unwrap();
            let mean = p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
            assert!((0.2..0.8).contains(&mean), "seed {seed}: mean {mean}");
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn reconstruction_is_continuous_in_the_input() {
    let model = toy_model(Mode::Baseline, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor((1, 1, 4, 4), &mut rng);
    let y = model.components[0].reconstruct(&x).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
        let dy = model.components[0].reconstruct(&(&x + eps)).unwrap() - &y;
        let change = dy.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(change < prev, "perturbation {eps}: change {change}");
        assert!(change < 100.0 * eps);
        prev = change;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any input size maps back to itself; outputs are nonnegative magnitudes.
    #[test]
    fn decoder_output_matches_input_shape(
        h in 3usize..40,
        w in 3usize..24,
        blocks in 1usize..4,
        batch in 1usize..3,
        seed in 0u64..1000,
    ) {
        let channels = vec![2; blocks];
        let latent = (h * w / 4).clamp(1, 8);
        let s = spec(h, w, &channels, latent);
        let c = ComponentModel::<f32>::build(&s, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor((batch, 1, h, w), &mut rng).mapv(|v| v as f32);
        let z = c.encode(&x).unwrap();
        prop_assert_eq!(z.dim(), (batch, latent));
        let y = c.decode(&z).unwrap();
        prop_assert_eq!(y.dim(), (batch, 1, h, w));
        prop_assert!(y.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert_eq!(c.discriminate(&x).unwrap().len(), batch);
    }
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in Mode::ALL {
        let s = spec(11, 7, &[3, 4], 5);
        let model = CassModel::<f32>::build(&s, 3, mode, LossWeights::defaults(3), 12).unwrap();
        let dir = tmp.path().join(mode.to_string());
        save_model(&model, &dir).unwrap();
        let back = load_model::<f32>(&dir).unwrap();
        assert_eq!(back, model);
        let x = Array4::from_elem((2, 1, 11, 7), 0.3f32);
        assert_eq!(
            back.components[2].reconstruct(&x).unwrap(),
            model.components[2].reconstruct(&x).unwrap()
        );
    }
}

#[test]
fn corrupt_checkpoints_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let model = toy_model(Mode::Cass, 1);
    save_model(&model, tmp.path()).unwrap();

    assert!(matches!(load_model::<f32>(tmp.path()), Err(CassError::Format { .. })), "dtype mismatch");

    let bin = tmp.path().join("component_1.bin");
    let bytes = std::fs::read(&bin).unwrap();
    std::fs::write(&bin, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_model::<f64>(tmp.path()), Err(CassError::Format { .. })));

    std::fs::write(&bin, b"not a tensor file").unwrap();
    assert!(matches!(load_model::<f64>(tmp.path()), Err(CassError::Format { .. })));

    std::fs::remove_file(&bin).unwrap();
    assert!(load_model::<f64>(tmp.path()).is_err());

    let manifest = tmp.path().join("model.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replace("spec.latent_dim = 3", "spec.latent_dim = 4")).unwrap();
    assert!(matches!(load_model::<f64>(tmp.path()), Err(CassError::Format { .. })));
}
