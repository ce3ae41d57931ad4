use std::path::{Path, PathBuf};

use rand::Rng;

use super::{mix, sample_count, MixtureExample, RecordMeta, Waveform};
use crate::error::{CassError, Result};
use crate::seed::{self, stream};

struct Pcm {
    samples: Vec<f64>,
    rate: u32,
}

fn read_mono_wav(path: &Path) -> Result<Pcm> {
    let unreadable = |reason: String| CassError::Unreadable {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| unreadable(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unreadable(format!("expected mono audio, found {} channels", spec.channels)));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>(),
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<Vec<_>, _>>()
        }
    }
    .map_err(|e| unreadable(e.to_string()))?;
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(unreadable(format!("non-finite sample at index {i}")));
    }
    Ok(Pcm {
        samples,
        rate: spec.sample_rate,
    })
}

/// Read mono PCM stems (and optionally a recorded mixture) and cut them into
/// aligned windows of `segment_length` samples.
///
/// Without `mixture_path` the mixture is the sum of the stems. A trailing
/// partial window is dropped.
pub fn ingest_audio_stems(
    stem_paths: &[PathBuf],
    mixture_path: Option<&Path>,
    segment_length: usize,
) -> Result<Vec<MixtureExample>> {
    if stem_paths.len() < 2 {
        return Err(CassError::arg("at least two stems are required"));
    }
    if segment_length == 0 {
        return Err(CassError::arg("segment length must be positive"));
    }
    let stems = stem_paths
        .iter()
        .map(|p| read_mono_wav(p))
        .collect::<Result<Vec<_>>>()?;
    let mixture = mixture_path.map(read_mono_wav).transpose()?;
    let rate = stems[0].rate;
    let all_paths = stem_paths.iter().map(PathBuf::as_path).chain(mixture_path);
    for (pcm, path) in stems.iter().chain(mixture.iter()).zip(all_paths) {
        if pcm.rate != rate {
            return Err(CassError::RateMismatch {
                path: path.to_path_buf(),
                expected: rate,
                found: pcm.rate,
            });
        }
    }
    let usable = stems
        .iter()
        .chain(mixture.iter())
        .map(|p| p.samples.len())
        .min()
        .unwrap_or(0);
    let count = usable / segment_length;
    if count == 0 {
        return Err(CassError::NoUsableSegments(format!(
            "shortest input has {usable} samples, segment length is {segment_length}"
        )));
    }
    let fs = rate as f64;
    (0..count)
        .map(|s| {
            let range = s * segment_length..(s + 1) * segment_length;
            let components = stems
                .iter()
                .map(|p| Waveform::new(p.samples[range.clone()].to_vec(), fs))
                .collect::<Result<Vec<_>>>()?;
            let mixture = match &mixture {
                Some(m) => Waveform::new(m.samples[range.clone()].to_vec(), fs)?,
                None => mix(&components, None)?,
            };
            let meta = RecordMeta::new(0)
                .with("segment", s as f64)
                .with("start_sample", range.start as f64);
            MixtureExample::new(mixture, components, None, meta)
        })
        .collect()
}

/// Sum of harmonics `k·fundamental` with amplitude `1/k`. Harmonics at or
/// above Nyquist are left out.
pub fn gen_harmonic_tone(
    fundamental: f64,
    n_harmonics: usize,
    duration: f64,
    sample_rate: f64,
) -> Result<Waveform> {
    if !(fundamental.is_finite() && fundamental > 0.0) {
        return Err(CassError::arg(format!("fundamental must be positive, got {fundamental}")));
    }
    if n_harmonics == 0 {
        return Err(CassError::arg("at least one harmonic is required"));
    }
    let n = sample_count(duration, sample_rate)?;
    let nyquist = sample_rate / 2.0;
    if fundamental >= nyquist {
        return Err(CassError::arg(format!(
            "fundamental {fundamental} Hz is not below Nyquist ({nyquist} Hz)"
        )));
    }
    let harmonics: Vec<(f64, f64)> = (1..=n_harmonics)
        .map(|k| (std::f64::consts::TAU * k as f64 * fundamental / sample_rate, 1.0 / k as f64))
        .take_while(|&(w, _)| w < std::f64::consts::PI)
        .collect();
    let samples = (0..n)
        .map(|i| harmonics.iter().map(|&(w, a)| a * (w * i as f64).sin()).sum())
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Two synthetic instruments standing in for audio stems: a low "bass" voice
/// and a higher "reed" voice, each a harmonic tone with random pitch and level.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSampler {
    pub low_fundamental: (f64, f64),
    pub high_fundamental: (f64, f64),
    pub low_harmonics: usize,
    pub high_harmonics: usize,
    pub amplitude: (f64, f64),
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for HarmonicSampler {
    fn default() -> Self {
        Self {
            low_fundamental: (55.0, 110.0),
            high_fundamental: (220.0, 440.0),
            low_harmonics: 6,
            high_harmonics: 8,
            amplitude: (0.3, 1.0),
            duration: 1.0,
            sample_rate: 22050.0,
        }
    }
}

impl HarmonicSampler {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("low_fundamental", self.low_fundamental),
            ("high_fundamental", self.high_fundamental),
            ("amplitude", self.amplitude),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(CassError::arg(format!("{name}: invalid range [{lo}, {hi}]")));
            }
        }
        if self.low_harmonics == 0 || self.high_harmonics == 0 {
            return Err(CassError::arg("harmonic counts must be at least 1"));
        }
        sample_count(self.duration, self.sample_rate).map(|_| ())
    }
}

pub fn make_harmonic_dataset(n: usize, sampler: &HarmonicSampler, seed: u64) -> Result<Vec<MixtureExample>> {
    if n == 0 {
        return Err(CassError::arg("dataset size must be at least 1"));
    }
    sampler.validate()?;
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    (0..n)
        .map(|i| {
            let record_seed = seed::derive(seed, &[stream::RECORD, i as u64]);
            let mut rng = seed::rng(record_seed, &[stream::PARAMS]);
            let f_low = uniform(&mut rng, sampler.low_fundamental);
            let f_high = uniform(&mut rng, sampler.high_fundamental);
            let a_low = uniform(&mut rng, sampler.amplitude);
            let a_high = uniform(&mut rng, sampler.amplitude);
            let low = gen_harmonic_tone(f_low, sampler.low_harmonics, sampler.duration, sampler.sample_rate)?
                .scaled(a_low)?;
            let high = gen_harmonic_tone(f_high, sampler.high_harmonics, sampler.duration, sampler.sample_rate)?
                .scaled(a_high)?;
            let components = vec![low, high];
            let mixture = mix(&components, None)?;
            let meta = RecordMeta::new(record_seed)
                .with("low_fundamental", f_low)
                .with("high_fundamental", f_high)
                .with("low_amplitude", a_low)
                .with("high_amplitude", a_high);
            MixtureExample::new(mixture, components, None, meta)
        })
        .collect()
}
