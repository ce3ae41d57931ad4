use rand::Rng;

use super::{bump, mix, sample_count, MixtureExample, RecordMeta, Waveform};
use crate::error::{CassError, Result};
use crate::seed::{self, stream};

/// Pulse template per beat: systolic peak then diastolic wave,
/// (centre, width, relative amplitude) in units of the beat period.
const PULSE_TEMPLATE: [(f64, f64, f64); 2] = [(0.25, 0.08, 1.0), (0.5, 0.1, 0.4)];

/// Relative amplitude of the second harmonic in the respiratory waveform.
const RESP_SECOND_HARMONIC: f64 = 0.15;

/// Resting heartbeat and respiratory PPG components, both with unit scale.
///
/// The heartbeat component is a periodic two-bump pulse train; the
/// respiratory component is a slow sinusoid with a weak second harmonic. The
/// seed draws the beat phase and the two respiratory phases.
pub fn gen_ppg_pair(
    heart_bpm: f64,
    resp_freq: f64,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<(Waveform, Waveform)> {
    if !(heart_bpm.is_finite() && heart_bpm > 0.0) {
        return Err(CassError::arg(format!("heart_bpm must be positive, got {heart_bpm}")));
    }
    if !(resp_freq.is_finite() && resp_freq > 0.0) {
        return Err(CassError::arg(format!("resp_freq must be positive, got {resp_freq}")));
    }
    let n = sample_count(duration, sample_rate)?;
    let mut rng = seed::rng(seed, &[]);
    let period = 60.0 / heart_bpm;
    let onset = period * rng.random::<f64>();
    let phase1 = std::f64::consts::TAU * rng.random::<f64>();
    let phase2 = std::f64::consts::TAU * rng.random::<f64>();

    let heart = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let k = ((t - onset) / period).floor();
            let mut v = 0.0;
            for beat in [k - 1.0, k, k + 1.0] {
                let start = onset + beat * period;
                for &(centre, width, rel) in &PULSE_TEMPLATE {
                    v += rel * bump(t - start - centre * period, width * period);
                }
            }
            v
        })
        .collect();
    let w = std::f64::consts::TAU * resp_freq / sample_rate;
    let resp = (0..n)
        .map(|i| {
            let x = w * i as f64;
            (x + phase1).sin() + RESP_SECOND_HARMONIC * (2.0 * x + phase2).sin()
        })
        .collect();
    Ok((Waveform::new(heart, sample_rate)?, Waveform::new(resp, sample_rate)?))
}

/// Uniform sampling ranges for PPG records (resting conditions).
#[derive(Debug, Clone, PartialEq)]
pub struct PpgParamSampler {
    pub heart_bpm: (f64, f64),
    pub resp_freq: (f64, f64),
    pub heart_amplitude: (f64, f64),
    pub resp_amplitude: (f64, f64),
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for PpgParamSampler {
    fn default() -> Self {
        Self {
            heart_bpm: (60.0, 100.0),
            resp_freq: (0.15, 0.4),
            heart_amplitude: (0.5, 1.5),
            resp_amplitude: (0.5, 1.5),
            duration: 8.0,
            sample_rate: 125.0,
        }
    }
}

impl PpgParamSampler {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("heart_bpm", self.heart_bpm),
            ("resp_freq", self.resp_freq),
            ("heart_amplitude", self.heart_amplitude),
            ("resp_amplitude", self.resp_amplitude),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(CassError::arg(format!("{name}: invalid range [{lo}, {hi}]")));
            }
        }
        sample_count(self.duration, self.sample_rate).map(|_| ())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `n` heartbeat/respiratory PPG mixtures; no extra noise term.
pub fn make_ppg_dataset(n: usize, sampler: &PpgParamSampler, seed: u64) -> Result<Vec<MixtureExample>> {
    if n == 0 {
        return Err(CassError::arg("dataset size must be at least 1"));
    }
    sampler.validate()?;
    (0..n)
        .map(|i| {
            let record_seed = seed::derive(seed, &[stream::RECORD, i as u64]);
            let mut rng = seed::rng(record_seed, &[stream::PARAMS]);
            let heart_bpm = uniform(&mut rng, sampler.heart_bpm);
            let resp_freq = uniform(&mut rng, sampler.resp_freq);
            let heart_amp = uniform(&mut rng, sampler.heart_amplitude);
            let resp_amp = uniform(&mut rng, sampler.resp_amplitude);
            let (heart, resp) = gen_ppg_pair(
                heart_bpm,
                resp_freq,
                sampler.duration,
                sampler.sample_rate,
                seed::derive(record_seed, &[stream::HEART]),
            )?;
            let components = vec![heart.scaled(heart_amp)?, resp.scaled(resp_amp)?];
            let mixture = mix(&components, None)?;
            let meta = RecordMeta::new(record_seed)
                .with("heart_bpm", heart_bpm)
                .with("resp_freq", resp_freq)
                .with("heart_amplitude", heart_amp)
                .with("resp_amplitude", resp_amp);
            MixtureExample::new(mixture, components, None, meta)
        })
        .collect()
}
