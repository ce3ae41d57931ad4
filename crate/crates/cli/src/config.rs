//! Experiment configuration: everything needed to regenerate a dataset, train
//! a model and score it, in the line-oriented `key = value` format of
//! [`cass_core::kv`].
//!
//! ```text
//! output = experiments
//!
//! dataset.kind = ecg                 # ecg | ppg | harmonic | audio
//! dataset.size = 600
//! dataset.seed = 0
//! dataset.test_fraction = 0.1666666
//! dataset.components = maternal,fetal
//! dataset.ecg.maternal_bpm = 80,90   # ranges are `lo,hi`
//! dataset.ecg.sample_rate = 250
//!
//! stft.window_length = 128           # also hop_length, fft_size, window, center
//! preprocess.normalization = global_rms
//!
//! network.latent_dim = 32            # also channels, nonlinearity
//! train.mode = cass_cross            # also lr_ae, lr_disc, batch_size, epochs, seed, ...
//! loss.alpha = 0.9                   # also beta, cross_weight, cross.<j>
//! eval.last_k = 40
//! ```
//!
//! Only the parameter block of the selected dataset kind is read or written.
//! Omitted keys take the defaults of the corresponding core types. Lists are
//! comma-separated, so audio stem paths must not contain commas.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use cass_core::kv::KvDoc;
use cass_core::nn::Activation;
use cass_core::spectro::{NormalizationSpec, StftConfig, WindowKind};
use cass_core::synthgen::{DatasetKind, EcgParamSampler, HarmonicSampler, PpgParamSampler};
use cass_core::{LossWeights, NetworkSpec, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioStems {
    pub stems: Vec<PathBuf>,
    /// A recorded mixture; when absent the stems are summed.
    pub mixture: Option<PathBuf>,
    pub segment_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Ecg(EcgParamSampler),
    Ppg(PpgParamSampler),
    Harmonic(HarmonicSampler),
    Audio(AudioStems),
}

impl DatasetSource {
    pub fn kind(&self) -> DatasetKind {
        match self {
            DatasetSource::Ecg(_) => DatasetKind::Ecg,
            DatasetSource::Ppg(_) => DatasetKind::Ppg,
            DatasetSource::Harmonic(_) => DatasetKind::Harmonic,
            DatasetSource::Audio(_) => DatasetKind::Audio,
        }
    }

    fn default_for(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Ecg => DatasetSource::Ecg(EcgParamSampler::default()),
            DatasetKind::Ppg => DatasetSource::Ppg(PpgParamSampler::default()),
            DatasetKind::Harmonic => DatasetSource::Harmonic(HarmonicSampler::default()),
            DatasetKind::Audio => DatasetSource::Audio(AudioStems {
                stems: Vec::new(),
                mixture: None,
                segment_length: 22050,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Number of records; for audio, the maximum number of segments kept.
    pub size: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub component_names: Vec<String>,
    pub source: DatasetSource,
}

/// Architecture knobs; the input shape follows from the data and the STFT,
/// and discriminators from the training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub latent_dim: usize,
    pub channels: Vec<usize>,
    pub nonlinearity: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latent_dim: NetworkSpec::DEFAULT_LATENT,
            channels: NetworkSpec::DEFAULT_CHANNELS.to_vec(),
            nonlinearity: Activation::LeakyRelu,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input_shape: (usize, usize), train: &TrainConfig) -> NetworkSpec {
        NetworkSpec {
            input_shape,
            latent_dim: self.latent_dim,
            channel_schedule: self.channels.clone(),
            nonlinearity: self.nonlinearity,
            discriminator: train.mode.uses_discriminators(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Width of the zoomed "last epochs" curve panel.
    pub last_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { last_k: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub stft: StftConfig,
    pub normalization: NormalizationSpec,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub eval: EvalConfig,
    pub output: PathBuf,
}

fn set_range(doc: &mut KvDoc, key: String, (lo, hi): (f64, f64)) {
    doc.set_list(key, &[lo, hi]);
}

fn get_range(doc: &KvDoc, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match doc.parse_list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => Err(CliError::usage(format!("`{key}` needs two values `lo,hi`, got {}", v.len()))),
    }
}

fn get_or<V: FromStr>(doc: &KvDoc, key: &str, default: V) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    Ok(doc.parse_or(key, default)?)
}

impl DatasetSource {
    fn write_kv(&self, doc: &mut KvDoc) {
        match self {
            DatasetSource::Ecg(s) => {
                let p = "dataset.ecg";
                set_range(doc, format!("{p}.maternal_bpm"), s.maternal_bpm);
                set_range(doc, format!("{p}.fetal_bpm"), s.fetal_bpm);
                set_range(doc, format!("{p}.amplitude_ratio"), s.amplitude_ratio);
                doc.set(format!("{p}.fetal_amplitude"), s.fetal_amplitude);
                set_range(doc, format!("{p}.noise_freq"), s.noise_freq);
                set_range(doc, format!("{p}.noise_amp_fraction"), s.noise_amp_fraction);
                doc.set(format!("{p}.duration"), s.duration);
                doc.set(format!("{p}.sample_rate"), s.sample_rate);
            }
            DatasetSource::Ppg(s) => {
                let p = "dataset.ppg";
                set_range(doc, format!("{p}.heart_bpm"), s.heart_bpm);
                set_range(doc, format!("{p}.resp_freq"), s.resp_freq);
                set_range(doc, format!("{p}.heart_amplitude"), s.heart_amplitude);
                set_range(doc, format!("{p}.resp_amplitude"), s.resp_amplitude);
                doc.set(format!("{p}.duration"), s.duration);
                doc.set(format!("{p}.sample_rate"), s.sample_rate);
            }
            DatasetSource::Harmonic(s) => {
                let p = "dataset.harmonic";
                set_range(doc, format!("{p}.low_fundamental"), s.low_fundamental);
                set_range(doc, format!("{p}.high_fundamental"), s.high_fundamental);
                doc.set(format!("{p}.low_harmonics"), s.low_harmonics);
                doc.set(format!("{p}.high_harmonics"), s.high_harmonics);
                set_range(doc, format!("{p}.amplitude"), s.amplitude);
                doc.set(format!("{p}.duration"), s.duration);
                doc.set(format!("{p}.sample_rate"), s.sample_rate);
            }
            DatasetSource::Audio(a) => {
                let paths: Vec<String> = a.stems.iter().map(|p| p.display().to_string()).collect();
                doc.set_list("dataset.audio.stems", &paths);
                if let Some(m) = &a.mixture {
                    doc.set("dataset.audio.mixture", m.display());
                }
                doc.set("dataset.audio.segment_length", a.segment_length);
            }
        }
    }

    fn read_kv(doc: &KvDoc, kind: DatasetKind) -> Result<Self> {
        Ok(match DatasetSource::default_for(kind) {
            DatasetSource::Ecg(d) => {
                let p = "dataset.ecg";
                DatasetSource::Ecg(EcgParamSampler {
                    maternal_bpm: get_range(doc, &format!("{p}.maternal_bpm"), d.maternal_bpm)?,
                    fetal_bpm: get_range(doc, &format!("{p}.fetal_bpm"), d.fetal_bpm)?,
                    amplitude_ratio: get_range(doc, &format!("{p}.amplitude_ratio"), d.amplitude_ratio)?,
                    fetal_amplitude: get_or(doc, &format!("{p}.fetal_amplitude"), d.fetal_amplitude)?,
                    noise_freq: get_range(doc, &format!("{p}.noise_freq"), d.noise_freq)?,
                    noise_amp_fraction: get_range(doc, &format!("{p}.noise_amp_fraction"), d.noise_amp_fraction)?,
                    duration: get_or(doc, &format!("{p}.duration"), d.duration)?,
                    sample_rate: get_or(doc, &format!("{p}.sample_rate"), d.sample_rate)?,
                })
            }
            DatasetSource::Ppg(d) => {
                let p = "dataset.ppg";
                DatasetSource::Ppg(PpgParamSampler {
                    heart_bpm: get_range(doc, &format!("{p}.heart_bpm"), d.heart_bpm)?,
                    resp_freq: get_range(doc, &format!("{p}.resp_freq"), d.resp_freq)?,
                    heart_amplitude: get_range(doc, &format!("{p}.heart_amplitude"), d.heart_amplitude)?,
                    resp_amplitude: get_range(doc, &format!("{p}.resp_amplitude"), d.resp_amplitude)?,
                    duration: get_or(doc, &format!("{p}.duration"), d.duration)?,
                    sample_rate: get_or(doc, &format!("{p}.sample_rate"), d.sample_rate)?,
                })
            }
            DatasetSource::Harmonic(d) => {
                let p = "dataset.harmonic";
                DatasetSource::Harmonic(HarmonicSampler {
                    low_fundamental: get_range(doc, &format!("{p}.low_fundamental"), d.low_fundamental)?,
                    high_fundamental: get_range(doc, &format!("{p}.high_fundamental"), d.high_fundamental)?,
                    low_harmonics: get_or(doc, &format!("{p}.low_harmonics"), d.low_harmonics)?,
                    high_harmonics: get_or(doc, &format!("{p}.high_harmonics"), d.high_harmonics)?,
                    amplitude: get_range(doc, &format!("{p}.amplitude"), d.amplitude)?,
                    duration: get_or(doc, &format!("{p}.duration"), d.duration)?,
                    sample_rate: get_or(doc, &format!("{p}.sample_rate"), d.sample_rate)?,
                })
            }
            DatasetSource::Audio(d) => {
                let stems: Vec<PathBuf> = doc
                    .parse_list::<String>("dataset.audio.stems")?
                    .unwrap_or_default()
                    .into_iter()
                    .map(PathBuf::from)
                    .collect();
                if stems.len() < 2 {
                    return Err(CliError::usage("dataset.audio.stems must list at least two stem files"));
                }
                DatasetSource::Audio(AudioStems {
                    stems,
                    mixture: doc.get("dataset.audio.mixture").map(PathBuf::from),
                    segment_length: get_or(doc, "dataset.audio.segment_length", d.segment_length)?,
                })
            }
        })
    }
}

fn write_stft(doc: &mut KvDoc, s: &StftConfig) {
    doc.set("stft.window_length", s.window_length);
    doc.set("stft.hop_length", s.hop_length);
    doc.set("stft.fft_size", s.fft_size);
    doc.set("stft.window", s.window);
    doc.set("stft.center", s.center);
}

fn read_stft(doc: &KvDoc, default: StftConfig) -> Result<StftConfig> {
    let window_length = get_or(doc, "stft.window_length", default.window_length)?;
    let cfg = StftConfig {
        window_length,
        // Hop and FFT size follow an overridden window unless given explicitly.
        hop_length: get_or(doc, "stft.hop_length", (window_length / 4).max(1))?,
        fft_size: get_or(doc, "stft.fft_size", window_length)?,
        window: get_or::<WindowKind>(doc, "stft.window", default.window)?,
        center: get_or(doc, "stft.center", default.center)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Defaults for a dataset kind: physiological or audio STFT, global RMS
    /// normalization and the core training defaults.
    pub fn defaults(kind: DatasetKind) -> Self {
        let stft = match kind {
            DatasetKind::Ecg | DatasetKind::Ppg => StftConfig::physiological(),
            DatasetKind::Audio | DatasetKind::Harmonic => StftConfig::audio(),
        };
        let names = kind.default_component_names();
        Self {
            dataset: DatasetConfig {
                size: 600,
                seed: 0,
                test_fraction: 1.0 / 6.0,
                component_names: names.clone(),
                source: DatasetSource::default_for(kind),
            },
            stft,
            normalization: NormalizationSpec::GlobalRms,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            loss: LossWeights::defaults(names.len()),
            eval: EvalConfig::default(),
            output: PathBuf::from("experiments"),
        }
    }

    pub fn k(&self) -> usize {
        self.dataset.component_names.len()
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("output", self.output.display());
        let d = &self.dataset;
        doc.set("dataset.kind", d.source.kind());
        doc.set("dataset.size", d.size);
        doc.set("dataset.seed", d.seed);
        doc.set("dataset.test_fraction", d.test_fraction);
        doc.set_list("dataset.components", &d.component_names);
        d.source.write_kv(&mut doc);
        write_stft(&mut doc, &self.stft);
        doc.set("preprocess.normalization", self.normalization);
        doc.set("network.latent_dim", self.network.latent_dim);
        doc.set_list("network.channels", &self.network.channels);
        doc.set("network.nonlinearity", self.network.nonlinearity);
        self.train.write_kv(&mut doc, "train");
        self.loss.write_kv(&mut doc, "loss");
        doc.set("eval.last_k", self.eval.last_k);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let kind: DatasetKind = doc.require("dataset.kind")?.parse()?;
        let base = Self::defaults(kind);
        let source = DatasetSource::read_kv(doc, kind)?;
        let component_names = match doc.parse_list::<String>("dataset.components")? {
            Some(names) => names,
            None => match &source {
                DatasetSource::Audio(a) if a.stems.len() != 2 => {
                    (0..a.stems.len()).map(|i| format!("stem{i}")).collect()
                }
                _ => base.dataset.component_names.clone(),
            },
        };
        match &source {
            DatasetSource::Ecg(s) => s.validate()?,
            DatasetSource::Ppg(s) => s.validate()?,
            DatasetSource::Harmonic(s) => s.validate()?,
            DatasetSource::Audio(_) => {}
        }
        if let DatasetSource::Audio(a) = &source {
            if a.stems.len() != component_names.len() {
                return Err(CliError::usage(format!(
                    "{} component names for {} audio stems",
                    component_names.len(),
                    a.stems.len()
                )));
            }
        }
        if component_names.len() < 2 {
            return Err(CliError::usage("at least two components are required"));
        }
        let k = component_names.len();
        let dataset = DatasetConfig {
            size: get_or(doc, "dataset.size", base.dataset.size)?,
            seed: get_or(doc, "dataset.seed", base.dataset.seed)?,
            test_fraction: get_or(doc, "dataset.test_fraction", base.dataset.test_fraction)?,
            component_names,
            source,
        };
        if dataset.size < 2 {
            return Err(CliError::usage("dataset.size must be at least 2 (one train and one test record)"));
        }
        if !(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0) {
            return Err(CliError::usage("dataset.test_fraction must be in (0, 1)"));
        }
        let d = NetworkConfig::default();
        let network = NetworkConfig {
            latent_dim: get_or(doc, "network.latent_dim", d.latent_dim)?,
            channels: doc.parse_list("network.channels")?.unwrap_or(d.channels),
            nonlinearity: get_or(doc, "network.nonlinearity", d.nonlinearity)?,
        };
        let train = TrainConfig::read_kv(doc, "train")?;
        let loss = LossWeights::read_kv(doc, "loss", k)?;
        loss.validate(k, train.mode)?;
        let cfg = Self {
            dataset,
            stft: read_stft(doc, base.stft)?,
            normalization: get_or(doc, "preprocess.normalization", base.normalization)?,
            network,
            train,
            loss,
            eval: EvalConfig {
                last_k: get_or(doc, "eval.last_k", base.eval.last_k)?,
            },
            output: doc.get("output").map(PathBuf::from).unwrap_or(base.output),
        };
        for key in doc.keys() {
            if !cfg.knows(key) {
                return Err(CliError::usage(format!("unknown configuration key `{key}`")));
            }
        }
        Ok(cfg)
    }

    /// Whether `key` is meaningful for this configuration; unknown keys are
    /// rejected so typos do not silently fall back to defaults.
    fn knows(&self, key: &str) -> bool {
        let section = |p: &str| key.starts_with(&format!("{p}."));
        let kind_block = format!("dataset.{}", self.dataset.source.kind());
        self.to_kv().contains(key)
            || section(&kind_block)
            || section("loss")
            || matches!(key, "dataset.audio.mixture")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(CliError::usage(format!("config file {} not found", path.display())));
        }
        Self::from_kv(&KvDoc::read(path)?)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_string()
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    /// Hash of what determines the dataset contents.
    pub fn dataset_hash(&self) -> String {
        let doc = self.to_kv().section("dataset");
        sha256_hex(doc.to_string().as_bytes())
    }

    /// Hash identifying a training run: the whole config except the output
    /// location and the settings a resumed run may change.
    pub fn run_hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.train.epochs = 0;
        c.train.checkpoint_every = 0;
        c.eval = EvalConfig::default();
        c.hash()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output.join("data").join(format!(
            "{}-{}-s{}",
            self.dataset.source.kind(),
            &self.dataset_hash()[..8],
            self.dataset.seed
        ))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.join("runs").join(format!(
            "{}-{}-s{}",
            self.train.mode,
            &self.run_hash()[..8],
            self.train.seed
        ))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
