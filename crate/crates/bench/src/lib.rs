//! Shared inputs for the benchmarks: one desk-scale ECG setup.

use cass_core::losses::Batch;
use cass_core::model::{CassModel, Mode, NetworkSpec};
use cass_core::nn::Activation;
use cass_core::spectro::{preprocess, NormalizationSpec, Normalizer, StftConfig};
use cass_core::synthgen::{make_ecg_dataset, EcgParamSampler};
use cass_core::trainer::{TensorSet, TrainConfig, Trainer};
use cass_core::{LossWeights, MixtureExample};

pub struct Fixture {
    pub stft: StftConfig,
    pub examples: Vec<MixtureExample>,
    pub set: TensorSet<f32>,
    pub spec: NetworkSpec,
}

impl Fixture {
    /// `n` ECG records at 250 Hz with a 128-sample window, as in the desk runs.
    pub fn ecg(n: usize) -> Self {
        let sampler = EcgParamSampler {
            sample_rate: 250.0,
            ..Default::default()
        };
        let examples = make_ecg_dataset(n, &sampler, 0).expect("valid sampler");
        let stft = StftConfig {
            window_length: 128,
            hop_length: 32,
            fft_size: 128,
            ..StftConfig::physiological()
        };
        let norm = Normalizer::fit(NormalizationSpec::GlobalRms, &examples, &stft).expect("valid stft");
        let prepared: Vec<_> = examples
            .iter()
            .map(|ex| preprocess(ex, &stft, &norm).expect("valid record"))
            .collect();
        let set = TensorSet::from_prepared(&prepared).expect("uniform records");
        let spec = NetworkSpec {
            input_shape: set.input_shape(),
            latent_dim: 32,
            channel_schedule: vec![8, 16, 16, 16],
            nonlinearity: Activation::LeakyRelu,
            discriminator: true,
        };
        Self {
            stft,
            examples,
            set,
            spec,
        }
    }

    pub fn model(&self, mode: Mode) -> CassModel<f32> {
        CassModel::build(&self.spec, 2, mode, LossWeights::defaults(2), 0).expect("valid spec")
    }

    pub fn trainer(&self, mode: Mode, batch_size: usize) -> Trainer<f32> {
        let cfg = TrainConfig {
            lr_ae: 1e-3,
            lr_disc: 1e-4,
            batch_size,
            epochs: 1,
            seed: 0,
            mode,
            eval_every: 1,
            checkpoint_every: 0,
        };
        Trainer::new(self.model(mode), cfg).expect("matching modes")
    }

    pub fn batch(&self, size: usize) -> Batch<f32> {
        self.set.batch(&(0..size).collect::<Vec<_>>())
    }
}
