use rand::Rng;

use super::{bump, mix, sample_count, MixtureExample, RecordMeta, Waveform};
use crate::error::{CassError, Result};
use crate::seed::{self, stream};

/// Beat template: (centre, width, relative amplitude), centre and width in
/// units of the beat period, relative to the R peak. P wave, QRS complex, T wave.
const ECG_TEMPLATE: [(f64, f64, f64); 3] = [(-0.2, 0.035, 0.12), (0.0, 0.02, 1.0), (0.3, 0.06, 0.3)];

pub const MATERNAL_BPM: (f64, f64) = (80.0, 90.0);
pub const FETAL_BPM: (f64, f64) = (120.0, 160.0);
pub const AMPLITUDE_RATIO: (f64, f64) = (2.0, 10.0);

/// Periodic three-bump ECG beat train with peak amplitude `amplitude`.
///
/// The seed only sets the position of the first R peak, drawn uniformly from
/// the middle half of the first period so no beat is cut by the edges.
pub fn gen_ecg_beat_train(
    bpm: f64,
    duration: f64,
    sample_rate: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Waveform> {
    if !(bpm.is_finite() && bpm > 0.0) {
        return Err(CassError::arg(format!("bpm must be positive, got {bpm}")));
    }
    if !amplitude.is_finite() {
        return Err(CassError::arg("amplitude must be finite"));
    }
    let n = sample_count(duration, sample_rate)?;
    let period = 60.0 / bpm;
    let first_peak = period * (0.25 + 0.5 * seed::rng(seed, &[]).random::<f64>());
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let nearest = ((t - first_peak) / period).round();
            let mut v = 0.0;
            for k in [nearest - 1.0, nearest, nearest + 1.0] {
                let r_peak = first_peak + k * period;
                for &(centre, width, rel) in &ECG_TEMPLATE {
                    v += rel * bump(t - r_peak - centre * period, width * period);
                }
            }
            amplitude * v
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

/// `amplitude · sin(2π·freq·t)` sampled at `t = n / sample_rate`.
pub fn gen_respiratory_noise(
    freq: f64,
    amplitude: f64,
    duration: f64,
    sample_rate: f64,
) -> Result<Waveform> {
    if !(freq.is_finite() && freq > 0.0) {
        return Err(CassError::arg(format!("frequency must be positive, got {freq}")));
    }
    if !amplitude.is_finite() {
        return Err(CassError::arg("amplitude must be finite"));
    }
    let n = sample_count(duration, sample_rate)?;
    let w = std::f64::consts::TAU * freq / sample_rate;
    Waveform::new((0..n).map(|i| amplitude * (w * i as f64).sin()).collect(), sample_rate)
}

/// Validated parameters of one synthetic ECG mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgParams {
    pub maternal_bpm: f64,
    pub fetal_bpm: f64,
    /// Maternal peak amplitude divided by fetal peak amplitude.
    pub amplitude_ratio: f64,
    pub fetal_amplitude: f64,
    pub noise_freq: f64,
    pub noise_amp: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

fn in_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !(v >= lo && v <= hi) {
        return Err(CassError::arg(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

impl EcgParams {
    pub fn validate(&self) -> Result<()> {
        in_range("maternal_bpm", self.maternal_bpm, MATERNAL_BPM)?;
        in_range("fetal_bpm", self.fetal_bpm, FETAL_BPM)?;
        in_range("amplitude_ratio", self.amplitude_ratio, AMPLITUDE_RATIO)?;
        if !(self.noise_freq.is_finite() && self.noise_freq > 0.0) {
            return Err(CassError::arg("noise_freq must be positive"));
        }
        if !(self.noise_amp.is_finite() && self.noise_amp >= 0.0) {
            return Err(CassError::arg("noise_amp must be nonnegative"));
        }
        if !(self.fetal_amplitude.is_finite() && self.fetal_amplitude > 0.0) {
            return Err(CassError::arg("fetal_amplitude must be positive"));
        }
        sample_count(self.duration, self.sample_rate)?;
        Ok(())
    }

    pub fn maternal_amplitude(&self) -> f64 {
        self.fetal_amplitude * self.amplitude_ratio
    }

    /// Render the record: components are (maternal, fetal); respiratory noise
    /// enters the mixture only.
    pub fn render(&self) -> Result<MixtureExample> {
        self.validate()?;
        let maternal = gen_ecg_beat_train(
            self.maternal_bpm,
            self.duration,
            self.sample_rate,
            self.maternal_amplitude(),
            seed::derive(self.seed, &[stream::MATERNAL]),
        )?;
        let fetal = gen_ecg_beat_train(
            self.fetal_bpm,
            self.duration,
            self.sample_rate,
            self.fetal_amplitude,
            seed::derive(self.seed, &[stream::FETAL]),
        )?;
        let noise =
            gen_respiratory_noise(self.noise_freq, self.noise_amp, self.duration, self.sample_rate)?;
        let components = vec![maternal, fetal];
        let mixture = mix(&components, Some(&noise))?;
        let meta = RecordMeta::new(self.seed)
            .with("maternal_bpm", self.maternal_bpm)
            .with("fetal_bpm", self.fetal_bpm)
            .with("amplitude_ratio", self.amplitude_ratio)
            .with("fetal_amplitude", self.fetal_amplitude)
            .with("noise_freq", self.noise_freq)
            .with("noise_amp", self.noise_amp);
        MixtureExample::new(mixture, components, Some(noise), meta)
    }
}

/// Uniform sampling ranges for [`EcgParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EcgParamSampler {
    pub maternal_bpm: (f64, f64),
    pub fetal_bpm: (f64, f64),
    pub amplitude_ratio: (f64, f64),
    pub fetal_amplitude: f64,
    pub noise_freq: (f64, f64),
    /// Noise amplitude as a fraction of the fetal amplitude.
    pub noise_amp_fraction: (f64, f64),
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for EcgParamSampler {
    fn default() -> Self {
        Self {
            maternal_bpm: MATERNAL_BPM,
            fetal_bpm: FETAL_BPM,
            amplitude_ratio: AMPLITUDE_RATIO,
            fetal_amplitude: 1.0,
            noise_freq: (0.15, 0.4),
            noise_amp_fraction: (0.0, 0.5),
            duration: 2.0,
            sample_rate: 500.0,
        }
    }
}

fn sub_range(name: &str, (lo, hi): (f64, f64), outer: (f64, f64)) -> Result<()> {
    if !(lo <= hi) {
        return Err(CassError::arg(format!("{name}: empty range [{lo}, {hi}]")));
    }
    in_range(name, lo, outer)?;
    in_range(name, hi, outer)
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl EcgParamSampler {
    pub fn validate(&self) -> Result<()> {
        sub_range("maternal_bpm", self.maternal_bpm, MATERNAL_BPM)?;
        sub_range("fetal_bpm", self.fetal_bpm, FETAL_BPM)?;
        sub_range("amplitude_ratio", self.amplitude_ratio, AMPLITUDE_RATIO)?;
        sub_range("noise_freq", self.noise_freq, (f64::MIN_POSITIVE, f64::INFINITY))?;
        sub_range("noise_amp_fraction", self.noise_amp_fraction, (0.0, f64::INFINITY))?;
        Ok(())
    }

    pub fn sample(&self, record_seed: u64) -> EcgParams {
        let mut rng = seed::rng(record_seed, &[stream::PARAMS]);
        let maternal_bpm = uniform(&mut rng, self.maternal_bpm);
        let fetal_bpm = uniform(&mut rng, self.fetal_bpm);
        let amplitude_ratio = uniform(&mut rng, self.amplitude_ratio);
        let noise_freq = uniform(&mut rng, self.noise_freq);
        let noise_amp = uniform(&mut rng, self.noise_amp_fraction) * self.fetal_amplitude;
        EcgParams {
            maternal_bpm,
            fetal_bpm,
            amplitude_ratio,
            fetal_amplitude: self.fetal_amplitude,
            noise_freq,
            noise_amp,
            duration: self.duration,
            sample_rate: self.sample_rate,
            seed: record_seed,
        }
    }
}

/// `n` maternal/fetal ECG mixtures; record `i` uses sub-seed `derive(seed, [RECORD, i])`.
pub fn make_ecg_dataset(n: usize, sampler: &EcgParamSampler, seed: u64) -> Result<Vec<MixtureExample>> {
    if n == 0 {
        return Err(CassError::arg("dataset size must be at least 1"));
    }
    sampler.validate()?;
    (0..n)
        .map(|i| sampler.sample(seed::derive(seed, &[stream::RECORD, i as u64])).render())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Interior local maxima above `threshold`.
    fn peaks(x: &[f64], threshold: f64) -> Vec<usize> {
        (1..x.len() - 1)
            .filter(|&i| x[i] > threshold && x[i] >= x[i - 1] && x[i] > x[i + 1])
            .collect()
    }

    #[test]
    fn sixty_bpm_two_seconds_has_two_beats() {
        for seed in 0..20 {
            let w = gen_ecg_beat_train(60.0, 2.0, 500.0, 1.0, seed).unwrap();
            assert_eq!(w.len(), 1000);
            assert_eq!(peaks(w.samples(), 0.5).len(), 2, "seed {seed}");
        }
    }

    #[test]
    fn peak_spacing_matches_bpm() {
        let fs = 500.0;
        let w = gen_ecg_beat_train(85.0, 6.0, fs, 2.0, 3).unwrap();
        let p = peaks(w.samples(), 1.0);
        assert!(p.len() >= 7);
        for pair in p.windows(2) {
            let spacing = (pair[1] - pair[0]) as f64 / fs;
            assert!((spacing - 60.0 / 85.0).abs() <= 1.0 / fs + 1e-12, "spacing {spacing}");
        }
    }

    #[test]
    fn peak_amplitude_within_five_percent() {
        for (bpm, amp) in [(80.0, 3.0), (160.0, 0.25), (120.0, 1.0)] {
            let w = gen_ecg_beat_train(bpm, 2.0, 500.0, amp, 11).unwrap();
            assert!((w.peak() - amp).abs() <= 0.05 * amp, "bpm {bpm}: {}", w.peak());
        }
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let w = gen_ecg_beat_train(70.0, 1.0, 250.0, 0.0, 1).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn beat_train_validates_arguments() {
        assert!(gen_ecg_beat_train(0.0, 1.0, 500.0, 1.0, 0).is_err());
        assert!(gen_ecg_beat_train(60.0, -1.0, 500.0, 1.0, 0).is_err());
        assert!(gen_ecg_beat_train(60.0, 1.0, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn respiratory_noise_hand_values() {
        let w = gen_respiratory_noise(1.0, 1.0, 1.0, 8.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [0.0, h, 1.0, h, 0.0, -h, -1.0, -h];
        assert_eq!(w.len(), 8);
        for (a, b) in w.samples().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(gen_respiratory_noise(0.3, 0.0, 2.0, 500.0)
            .unwrap()
            .samples()
            .iter()
            .all(|&v| v == 0.0));
        assert!(gen_respiratory_noise(0.0, 1.0, 1.0, 8.0).is_err());
    }

    #[test]
    fn respiratory_noise_peak_bound() {
        // The sampled peak reaches the amplitude exactly when a sample lands on
        // the crest (fs / 4f integral) and is otherwise within half a sample of it.
        for (f, fs) in [(1.0, 8.0), (0.25, 500.0), (2.0, 64.0)] {
            let w = gen_respiratory_noise(f, 0.7, 4.0, fs).unwrap();
            assert!((w.peak() - 0.7).abs() < 1e-6, "f {f} fs {fs}");
        }
        for (f, fs) in [(1.0, 10.0), (0.37, 500.0), (3.0, 50.0)] {
            let w = gen_respiratory_noise(f, 0.7, 4.0, fs).unwrap();
            let floor = 0.7 * (std::f64::consts::PI * f / fs).cos();
            assert!(w.peak() <= 0.7 + 1e-12 && w.peak() >= floor - 1e-12, "f {f} fs {fs}");
        }
    }

    #[test]
    fn params_reject_out_of_range() {
        let mut p = EcgParamSampler::default().sample(1);
        p.validate().unwrap();
        p.maternal_bpm = 95.0;
        assert!(p.validate().is_err());
        let mut p = EcgParamSampler::default().sample(1);
        p.amplitude_ratio = 1.5;
        assert!(p.validate().is_err());
        let s = EcgParamSampler {
            fetal_bpm: (110.0, 150.0),
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn amplitude_ratio_is_realized() {
        for ex in make_ecg_dataset(30, &EcgParamSampler::default(), 5).unwrap() {
            let measured = ex.components[0].peak() / ex.components[1].peak();
            let sampled = ex.meta.get("amplitude_ratio").unwrap();
            assert!((measured / sampled - 1.0).abs() < 0.10, "{measured} vs {sampled}");
        }
    }

    #[test]
    fn dataset_statistics() {
        let data = make_ecg_dataset(1000, &EcgParamSampler::default(), 42).unwrap();
        let m: Vec<f64> = data.iter().map(|e| e.meta.get("maternal_bpm").unwrap()).collect();
        assert!(m.iter().all(|&v| (80.0..=90.0).contains(&v)));
        let mean_ratio =
            data.iter().map(|e| e.meta.get("amplitude_ratio").unwrap()).sum::<f64>() / 1000.0;
        assert!((5.5..=6.5).contains(&mean_ratio), "mean ratio {mean_ratio}");
        for e in &data {
            assert!(e.additivity_residual() < 1e-9);
            assert!(e.meta.get("noise_amp").unwrap() <= 0.5 * e.meta.get("fetal_amplitude").unwrap());
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let s = EcgParamSampler::default();
        assert_eq!(make_ecg_dataset(5, &s, 9).unwrap(), make_ecg_dataset(5, &s, 9).unwrap());
        assert_ne!(make_ecg_dataset(5, &s, 9).unwrap(), make_ecg_dataset(5, &s, 10).unwrap());
        assert!(make_ecg_dataset(0, &s, 9).is_err());
    }
}
