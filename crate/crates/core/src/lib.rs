//! Cross adversarial source separation.
//!
//! A mixture spectrogram is fed to `K` encoder/decoder pairs, one per
//! source component. Each decoder is additionally judged by a per-component
//! discriminator, and in cross mode every discriminator also learns to reject
//! the reconstructions produced for the *other* components.
//!
//! The crate is organised bottom-up:
//!
//! * [`synthgen`] builds seeded ECG / PPG / harmonic corpora and ingests WAV stems.
//! * [`spectro`] converts waveforms to magnitude spectrograms and back.
//! * [`nn`] holds the layer primitives with hand-written backward passes.
//! * [`model`] assembles encoders, decoders and discriminators into a [`model::CassModel`].
//! * [`losses`] implements the reconstruction, adversarial and cross objectives.
//! * [`trainer`] alternates autoencoder and discriminator updates.
//! * [`eval`] computes relative p-norm errors, cross-discriminator analysis and plots.

pub mod binio;
pub mod error;
pub mod eval;
pub mod kv;
pub mod losses;
pub mod model;
pub mod nn;
pub mod real;
pub mod seed;
pub mod spectro;
pub mod synthgen;
pub mod trainer;

pub use error::{CassError, Result};
pub use eval::{ErrorReport, Norm};
pub use losses::LossWeights;
pub use model::{CassModel, ComponentModel, Mode, NetworkSpec};
pub use real::Real;
pub use spectro::{Spectrogram, StftConfig};
pub use synthgen::{MixtureExample, Waveform};
pub use trainer::{EpochLog, TrainConfig};
