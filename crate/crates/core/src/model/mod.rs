//! Per-component networks and the assembled multi-component model.
//!
//! Each component owns an encoder/decoder pair (the auto-encoder) and, unless
//! the model runs in baseline mode, a discriminator that judges component
//! spectrograms. Tensors are batched `[batch, 1, freq_bins, frames]`.

mod checkpoint;
mod networks;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array4, ArrayViewD, ArrayViewMutD};

pub use checkpoint::{load_model, save_model, MODEL_MANIFEST};
pub use networks::{
    clamp_prob, Decoder, DecoderCache, Discriminator, DiscriminatorCache, Encoder, EncoderCache, Trunk, PROB_EPS,
};

use crate::error::{CassError, Result};
use crate::kv::KvDoc;
use crate::losses::LossWeights;
use crate::nn::{Activation, Params};
use crate::real::Real;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Baseline,
    Cass,
    CassCross,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Cass, Mode::CassCross];

    pub fn uses_discriminators(self) -> bool {
        self != Mode::Baseline
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Cass => "cass",
            Mode::CassCross => "cass_cross",
        })
    }
}

impl FromStr for Mode {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "cass" => Ok(Mode::Cass),
            "cass_cross" => Ok(Mode::CassCross),
            other => Err(CassError::config(format!(
                "unknown mode `{other}` (expected baseline, cass or cass_cross)"
            ))),
        }
    }
}

/// Architecture of one component's networks.
///
/// The trunk is an input 3×3 convolution followed by one stride-2 residual
/// block per entry of `channel_schedule`; with the default four entries that
/// is nine weighted convolutions. The decoder mirrors it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `(freq_bins, frames)`
    pub input_shape: (usize, usize),
    pub latent_dim: usize,
    pub channel_schedule: Vec<usize>,
    pub nonlinearity: Activation,
    pub discriminator: bool,
}

impl NetworkSpec {
    pub const DEFAULT_LATENT: usize = 128;
    pub const DEFAULT_CHANNELS: [usize; 4] = [16, 32, 64, 64];

    pub fn new(input_shape: (usize, usize)) -> Self {
        Self {
            input_shape,
            latent_dim: Self::DEFAULT_LATENT,
            channel_schedule: Self::DEFAULT_CHANNELS.to_vec(),
            nonlinearity: Activation::LeakyRelu,
            discriminator: true,
        }
    }

    pub fn block_count(&self) -> usize {
        self.channel_schedule.len()
    }

    pub fn input_size(&self) -> usize {
        self.input_shape.0 * self.input_shape.1
    }

    /// Spatial size after the trunk: each stride-2 block maps `n` to `ceil(n/2)`.
    pub fn feature_hw(&self) -> (usize, usize) {
        let shrink = |mut n: usize| {
            for _ in 0..self.block_count() {
                n = n.div_ceil(2);
            }
            n
        };
        (shrink(self.input_shape.0), shrink(self.input_shape.1))
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_shape;
        if h == 0 || w == 0 {
            return Err(CassError::config("input_shape must be positive"));
        }
        if self.latent_dim == 0 || self.latent_dim >= self.input_size() {
            return Err(CassError::config(format!(
                "latent_dim {} must be in 1..{} (the input size) so the encoder reduces dimension",
                self.latent_dim,
                self.input_size()
            )));
        }
        if self.channel_schedule.is_empty() || self.channel_schedule.contains(&0) {
            return Err(CassError::config("channel_schedule must be a nonempty list of positive counts"));
        }
        if matches!(self.nonlinearity, Activation::Sigmoid | Activation::Softplus) {
            return Err(CassError::config(format!(
                "{} is reserved for output heads; choose relu, leaky_relu, tanh or elu",
                self.nonlinearity
            )));
        }
        Ok(())
    }

    /// Writes `<prefix>.input_height`, `.input_width`, `.latent_dim`,
    /// `.channels`, `.nonlinearity` and `.discriminator`.
    pub fn write_kv(&self, doc: &mut KvDoc, prefix: &str) {
        doc.set(format!("{prefix}.input_height"), self.input_shape.0);
        doc.set(format!("{prefix}.input_width"), self.input_shape.1);
        doc.set(format!("{prefix}.latent_dim"), self.latent_dim);
        doc.set_list(format!("{prefix}.channels"), &self.channel_schedule);
        doc.set(format!("{prefix}.nonlinearity"), self.nonlinearity);
        doc.set(format!("{prefix}.discriminator"), self.discriminator);
    }

    pub fn read_kv(doc: &KvDoc, prefix: &str) -> Result<Self> {
        let spec = Self {
            input_shape: (
                doc.parse_required(&format!("{prefix}.input_height"))?,
                doc.parse_required(&format!("{prefix}.input_width"))?,
            ),
            latent_dim: doc.parse_or(&format!("{prefix}.latent_dim"), Self::DEFAULT_LATENT)?,
            channel_schedule: doc
                .parse_list(&format!("{prefix}.channels"))?
                .unwrap_or_else(|| Self::DEFAULT_CHANNELS.to_vec()),
            nonlinearity: doc.parse_or(&format!("{prefix}.nonlinearity"), Activation::LeakyRelu)?,
            discriminator: doc.parse_or(&format!("{prefix}.discriminator"), true)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub(crate) fn check_input<T>(&self, x: &Array4<T>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 1 || (h, w) != self.input_shape {
            return Err(CassError::shape(
                format!("[batch, 1, {}, {}]", self.input_shape.0, self.input_shape.1),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }
}

/// Encoder, decoder and optional discriminator for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel<T> {
    pub spec: NetworkSpec,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
    pub discriminator: Option<Discriminator<T>>,
}

impl<T: Real> ComponentModel<T> {
    /// Deterministic in `init_seed`; each network draws from its own stream,
    /// so the auto-encoder is identical whether or not a discriminator exists.
    pub fn build(spec: &NetworkSpec, init_seed: u64) -> Result<Self> {
        spec.validate()?;
        let ch = &spec.channel_schedule;
        let act = spec.nonlinearity;
        let feat = spec.feature_hw();
        let encoder = Encoder::new(ch, feat, spec.latent_dim, act, &mut seed::rng(init_seed, &[stream::ENCODER]));
        let decoder = Decoder::new(
            ch,
            feat,
            spec.input_shape,
            spec.latent_dim,
            act,
            &mut seed::rng(init_seed, &[stream::DECODER]),
        );
        let discriminator = spec
            .discriminator
            .then(|| Discriminator::new(ch, feat, act, &mut seed::rng(init_seed, &[stream::DISCRIMINATOR])));
        Ok(Self {
            spec: spec.clone(),
            encoder,
            decoder,
            discriminator,
        })
    }

    pub fn encode(&self, x: &Array4<T>) -> Result<Array2<T>> {
        self.spec.check_input(x)?;
        Ok(self.encoder.forward(x).0)
    }

    pub fn decode(&self, h: &Array2<T>) -> Result<Array4<T>> {
        if h.ncols() != self.spec.latent_dim {
            return Err(CassError::shape(
                format!("[batch, {}]", self.spec.latent_dim),
                format!("{:?}", h.shape()),
            ));
        }
        Ok(self.decoder.forward(h).0)
    }

    /// `AE(x) = decode(encode(x))`.
    pub fn reconstruct(&self, x: &Array4<T>) -> Result<Array4<T>> {
        self.decode(&self.encode(x)?)
    }

    pub fn discriminate(&self, x: &Array4<T>) -> Result<Array1<T>> {
        self.spec.check_input(x)?;
        let d = self
            .discriminator
            .as_ref()
            .ok_or_else(|| CassError::config("component has no discriminator"))?;
        Ok(d.forward(x).0)
    }

    pub fn autoencoder_params(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn discriminator_params(&self) -> usize {
        self.discriminator.as_ref().map_or(0, |d| d.param_count())
    }
}

impl<T: Real> Params<T> for ComponentModel<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
        self.encoder.collect(&format!("{prefix}encoder."), out);
        self.decoder.collect(&format!("{prefix}decoder."), out);
        if let Some(d) = &self.discriminator {
            d.collect(&format!("{prefix}discriminator."), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<ArrayViewMutD<'a, T>>) {
        self.encoder.collect_mut(out);
        self.decoder.collect_mut(out);
        if let Some(d) = &mut self.discriminator {
            d.collect_mut(out);
        }
    }
}

/// `K` component models sharing a mode and loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CassModel<T> {
    pub components: Vec<ComponentModel<T>>,
    pub mode: Mode,
    pub weights: LossWeights,
}

impl<T: Real> CassModel<T> {
    pub fn new(components: Vec<ComponentModel<T>>, mode: Mode, weights: LossWeights) -> Result<Self> {
        let k = components.len();
        if k < 2 {
            return Err(CassError::config(format!("a model needs at least 2 components, got {k}")));
        }
        weights.validate(k, mode)?;
        if mode.uses_discriminators() {
            if let Some(i) = components.iter().position(|c| c.discriminator.is_none()) {
                return Err(CassError::config(format!("mode {mode} needs a discriminator for component {i}")));
            }
        }
        Ok(Self {
            components,
            mode,
            weights,
        })
    }

    /// Component `i` is initialised from `seed::derive(init_seed, [PARAMS, i])`.
    /// Baseline models are built without discriminators.
    pub fn build(spec: &NetworkSpec, k: usize, mode: Mode, weights: LossWeights, init_seed: u64) -> Result<Self> {
        let mut spec = spec.clone();
        spec.discriminator = mode.uses_discriminators();
        let components = (0..k)
            .map(|i| ComponentModel::build(&spec, seed::derive(init_seed, &[stream::PARAMS, i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, mode, weights)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.components[0].spec
    }

    pub fn component(&self, i: usize) -> Result<&ComponentModel<T>> {
        self.components
            .get(i)
            .ok_or_else(|| CassError::arg(format!("component index {i} out of range for K={}", self.k())))
    }

    pub fn all_finite(&self) -> bool {
        self.components.iter().all(|c| c.all_finite())
    }
}
