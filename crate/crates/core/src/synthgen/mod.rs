//! Seeded synthetic corpora and audio stem ingestion.
//!
//! Every generator is a pure function of its arguments and seed. Mixing is
//! additive in the time domain, so the ground-truth decomposition of every
//! synthetic record is exact.

mod audio;
mod dataset;
mod ecg;
mod ppg;

use std::collections::BTreeMap;

use crate::error::{CassError, Result};

pub use audio::{gen_harmonic_tone, ingest_audio_stems, make_harmonic_dataset, HarmonicSampler};
pub use dataset::{split_indices, Dataset, DatasetKind, Split, MANIFEST as DATASET_MANIFEST};
pub use ecg::{gen_ecg_beat_train, gen_respiratory_noise, make_ecg_dataset, EcgParamSampler, EcgParams};
pub use ppg::{gen_ppg_pair, make_ppg_dataset, PpgParamSampler};

/// A sampled 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(CassError::arg("waveform must hold at least one sample"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(CassError::arg(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CassError::arg(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|v| v * gain).collect(), self.sample_rate)
    }
}

/// Generation parameters of one record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordMeta {
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
}

impl RecordMeta {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

/// One mixture with its `K` ground-truth components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub components: Vec<Waveform>,
    /// Additive interference present in the mixture but in no component.
    pub noise: Option<Waveform>,
    pub meta: RecordMeta,
}

impl MixtureExample {
    pub fn new(
        mixture: Waveform,
        components: Vec<Waveform>,
        noise: Option<Waveform>,
        meta: RecordMeta,
    ) -> Result<Self> {
        if components.len() < 2 {
            return Err(CassError::arg(format!(
                "a mixture needs at least 2 components, got {}",
                components.len()
            )));
        }
        for w in components.iter().chain(noise.iter()) {
            check_compatible(&mixture, w)?;
        }
        Ok(Self {
            mixture,
            components,
            noise,
            meta,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.mixture.sample_rate()
    }

    /// Largest per-sample deviation from `mixture = Σ components + noise`.
    pub fn additivity_residual(&self) -> f64 {
        (0..self.len())
            .map(|n| {
                let sum: f64 = self.components.iter().map(|c| c.samples[n]).sum::<f64>()
                    + self.noise.as_ref().map_or(0.0, |w| w.samples[n]);
                (self.mixture.samples[n] - sum).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn check_compatible(a: &Waveform, b: &Waveform) -> Result<()> {
    if a.len() != b.len() {
        return Err(CassError::arg(format!(
            "waveform length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate != b.sample_rate {
        return Err(CassError::arg(format!(
            "sample rate mismatch: {} vs {}",
            a.sample_rate, b.sample_rate
        )));
    }
    Ok(())
}

/// Elementwise sum of `components` plus the optional `noise` term.
pub fn mix(components: &[Waveform], noise: Option<&Waveform>) -> Result<Waveform> {
    let first = components
        .first()
        .ok_or_else(|| CassError::arg("mix needs at least one component"))?;
    let mut out = first.samples.clone();
    for w in components[1..].iter().chain(noise) {
        check_compatible(first, w)?;
        for (o, v) in out.iter_mut().zip(&w.samples) {
            *o += v;
        }
    }
    Waveform::new(out, first.sample_rate)
}

fn sample_count(duration: f64, sample_rate: f64) -> Result<usize> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(CassError::arg(format!("duration must be positive, got {duration}")));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(CassError::arg(format!("sample rate must be positive, got {sample_rate}")));
    }
    let n = (duration * sample_rate).round() as usize;
    if n == 0 {
        return Err(CassError::arg("duration shorter than one sample"));
    }
    Ok(n)
}

/// Gaussian bump evaluated at offset `dt` from its centre.
#[inline]
fn bump(dt: f64, sigma: f64) -> f64 {
    (-0.5 * (dt / sigma).powi(2)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Waveform {
        Waveform::new(v.to_vec(), 10.0).unwrap()
    }

    #[test]
    fn waveform_invariants() {
        assert!(Waveform::new(vec![], 1.0).is_err());
        assert!(Waveform::new(vec![1.0], 0.0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn mix_is_additive() {
        let x = w(&[0.5, -1.0, 2.0]);
        let zero = w(&[0.0; 3]);
        assert_eq!(mix(&[x.clone(), zero], None).unwrap(), x);
        let neg = x.scaled(-1.0).unwrap();
        assert!(mix(&[x.clone(), neg], None).unwrap().samples().iter().all(|&v| v == 0.0));
        assert_eq!(mix(&[w(&[1.0, 2.0]), w(&[3.0, 4.0])], None).unwrap().samples(), &[4.0, 6.0]);
    }

    #[test]
    fn mix_rejects_mismatch() {
        assert!(mix(&[w(&[1.0, 2.0]), w(&[1.0])], None).is_err());
        let other_rate = Waveform::new(vec![1.0, 2.0], 20.0).unwrap();
        assert!(mix(&[w(&[1.0, 2.0]), other_rate], None).is_err());
        assert!(mix(&[], None).is_err());
    }

    #[test]
    fn example_needs_two_components() {
        let x = w(&[1.0]);
        assert!(MixtureExample::new(x.clone(), vec![x.clone()], None, RecordMeta::new(0)).is_err());
        assert!(MixtureExample::new(x.clone(), vec![x.clone(), x], None, RecordMeta::new(0)).is_ok());
    }
}
