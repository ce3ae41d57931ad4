//! STFT front end: waveform -> magnitude/phase spectrogram and back.
//!
//! Frames are windowed, zero-padded to `fft_size` and transformed with a real
//! FFT. Inversion is weighted overlap-add: each inverse frame is multiplied by
//! the synthesis window and the sum is divided by the overlap-added squared
//! window, which reconstructs the input exactly wherever that sum is nonzero.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::error::{CassError, Result};
use crate::synthgen::{MixtureExample, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann.
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn values(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = std::f64::consts::TAU * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Hann => "hann",
            WindowKind::Hamming => "hamming",
            WindowKind::Rectangular => "rectangular",
        })
    }
}

impl FromStr for WindowKind {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(CassError::config(format!("unknown window `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub window: WindowKind,
    /// Pad `window_length / 2` zeros on the left so the first sample sits at
    /// the centre of frame 0, and enough on the right to cover the tail.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::physiological()
    }
}

impl StftConfig {
    /// 256-sample Hann window, hop 64 (ECG / PPG).
    pub fn physiological() -> Self {
        Self {
            window_length: 256,
            hop_length: 64,
            fft_size: 256,
            window: WindowKind::Hann,
            center: true,
        }
    }

    /// 1024-sample Hann window, hop 256 (audio).
    pub fn audio() -> Self {
        Self {
            window_length: 1024,
            hop_length: 256,
            fft_size: 1024,
            window: WindowKind::Hann,
            center: true,
        }
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn left_pad(&self) -> usize {
        if self.center {
            self.window_length / 2
        } else {
            0
        }
    }

    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if self.center {
            Ok(1 + len / self.hop_length)
        } else if len < self.window_length {
            Err(CassError::arg(format!(
                "signal of {len} samples is shorter than the {}-sample window",
                self.window_length
            )))
        } else {
            Ok(1 + (len - self.window_length) / self.hop_length)
        }
    }

    /// Deviation of the overlap-added window from a constant, relative to its mean.
    pub fn cola_deviation(&self) -> f64 {
        let w = self.window.values(self.window_length);
        let sums: Vec<f64> = (0..self.hop_length)
            .map(|n| w.iter().skip(n).step_by(self.hop_length).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            f64::INFINITY
        } else {
            (max - min) / mean
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (win, hop, fft) = (self.window_length, self.hop_length, self.fft_size);
        if !(0 < hop && hop <= win && win <= fft) {
            return Err(CassError::config(format!(
                "need 0 < hop ({hop}) <= window ({win}) <= fft size ({fft})"
            )));
        }
        if self.center && 2 * hop > win {
            return Err(CassError::config(format!(
                "centred framing needs hop ({hop}) <= window / 2 ({})",
                win / 2
            )));
        }
        let dev = self.cola_deviation();
        if dev > 1e-9 {
            return Err(CassError::config(format!(
                "{} window of {win} samples with hop {hop} violates constant overlap-add (deviation {dev:.3e})",
                self.window
            )));
        }
        Ok(())
    }
}

/// Magnitude/phase spectrogram, `[freq_bins, frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitude: Array2<f64>,
    pub phase: Array2<f64>,
    pub config: StftConfig,
    pub source_length: usize,
    pub sample_rate: f64,
}

impl Spectrogram {
    pub fn validate(&self) -> Result<()> {
        let bins = self.config.freq_bins();
        let frames = self.config.frame_count(self.source_length)?;
        if self.magnitude.dim() != (bins, frames) {
            return Err(CassError::shape(format!("{:?}", (bins, frames)), format!("{:?}", self.magnitude.dim())));
        }
        if self.phase.dim() != self.magnitude.dim() {
            return Err(CassError::shape(format!("{:?}", self.magnitude.dim()), format!("{:?}", self.phase.dim())));
        }
        if self.magnitude.iter().any(|&m| !(m.is_finite() && m >= 0.0)) {
            return Err(CassError::arg("magnitude must be finite and nonnegative"));
        }
        if self.phase.iter().any(|p| !p.is_finite()) {
            return Err(CassError::arg("phase must be finite"));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.magnitude.ncols()
    }

    /// Complex frames `magnitude · e^{i·phase}`.
    pub fn complex(&self) -> Array2<Complex64> {
        ndarray::Zip::from(&self.magnitude)
            .and(&self.phase)
            .map_collect(|&m, &p| Complex64::from_polar(m, p))
    }
}

/// Complex STFT frames, `[freq_bins, frames]`.
pub fn stft_frames(samples: &[f64], cfg: &StftConfig) -> Result<Array2<Complex64>> {
    cfg.validate()?;
    let len = samples.len();
    let frames = cfg.frame_count(len)?;
    let window = cfg.window.values(cfg.window_length);
    let pad = cfg.left_pad() as isize;
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut out = Array2::<Complex64>::zeros((cfg.freq_bins(), frames));
    for t in 0..frames {
        buf.iter_mut().for_each(|v| *v = 0.0);
        let start = (t * cfg.hop_length) as isize - pad;
        for (m, w) in window.iter().enumerate() {
            let idx = start + m as isize;
            if idx >= 0 && (idx as usize) < len {
                buf[m] = samples[idx as usize] * w;
            }
        }
        fft.process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
            .map_err(|e| CassError::arg(format!("fft failed: {e}")))?;
        out.column_mut(t).assign(&ndarray::aview1(&spectrum));
    }
    Ok(out)
}

/// Weighted overlap-add inverse of [`stft_frames`], trimmed to `source_length`.
pub fn istft_frames(frames: &Array2<Complex64>, cfg: &StftConfig, source_length: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (bins, n_frames) = frames.dim();
    if bins != cfg.freq_bins() {
        return Err(CassError::shape(format!("{} bins", cfg.freq_bins()), format!("{bins} bins")));
    }
    let window = cfg.window.values(cfg.window_length);
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(cfg.fft_size);
    let mut spectrum = ifft.make_input_vec();
    let mut buf = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let total = n_frames.saturating_sub(1) * cfg.hop_length + cfg.window_length;
    let mut acc = vec![0.0; total];
    let mut weight = vec![0.0; total];
    let scale = 1.0 / cfg.fft_size as f64;
    for t in 0..n_frames {
        for (dst, src) in spectrum.iter_mut().zip(frames.column(t)) {
            *dst = *src;
        }
        // DC and (for even sizes) Nyquist bins of a real signal are real.
        spectrum[0].im = 0.0;
        if cfg.fft_size % 2 == 0 {
            spectrum[bins - 1].im = 0.0;
        }
        ifft.process_with_scratch(&mut spectrum, &mut buf, &mut scratch)
            .map_err(|e| CassError::arg(format!("inverse fft failed: {e}")))?;
        let start = t * cfg.hop_length;
        for (m, w) in window.iter().enumerate() {
            acc[start + m] += buf[m] * scale * w;
            weight[start + m] += w * w;
        }
    }
    let pad = cfg.left_pad();
    Ok((0..source_length)
        .map(|n| match (acc.get(n + pad), weight.get(n + pad)) {
            (Some(&a), Some(&w)) if w > 1e-12 => a / w,
            _ => 0.0,
        })
        .collect())
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    let frames = stft_frames(w.samples(), cfg)?;
    Ok(Spectrogram {
        magnitude: frames.mapv(|c| c.norm()),
        phase: frames.mapv(|c| if c.norm() > 0.0 { c.arg() } else { 0.0 }),
        config: cfg.clone(),
        source_length: w.len(),
        sample_rate: w.sample_rate(),
    })
}

pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    s.validate()?;
    let samples = istft_frames(&s.complex(), &s.config, s.source_length)?;
    Waveform::new(samples, s.sample_rate)
}

/// How magnitudes are scaled before they reach the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationSpec {
    None,
    /// Divide by the largest mixture magnitude over the whole dataset.
    GlobalPeak,
    /// Divide by the largest mixture magnitude of each record.
    ExamplePeak,
    /// Divide by the root-mean-square mixture magnitude over the whole
    /// dataset, so training inputs have unit RMS.
    GlobalRms,
}

impl fmt::Display for NormalizationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizationSpec::None => "none",
            NormalizationSpec::GlobalPeak => "global_peak",
            NormalizationSpec::ExamplePeak => "example_peak",
            NormalizationSpec::GlobalRms => "global_rms",
        })
    }
}

impl FromStr for NormalizationSpec {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormalizationSpec::None),
            "global_peak" => Ok(NormalizationSpec::GlobalPeak),
            "example_peak" => Ok(NormalizationSpec::ExamplePeak),
            "global_rms" => Ok(NormalizationSpec::GlobalRms),
            other => Err(CassError::config(format!("unknown normalization `{other}`"))),
        }
    }
}

/// `normalized = raw / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormState {
    pub scale: f64,
}

impl NormState {
    pub fn normalize(&self, m: &Array2<f64>) -> Array2<f64> {
        m.mapv(|v| v / self.scale)
    }

    pub fn denormalize(&self, m: &Array2<f64>) -> Array2<f64> {
        m.mapv(|v| v * self.scale)
    }
}

fn peak(m: &Array2<f64>) -> f64 {
    m.iter().cloned().fold(0.0, f64::max)
}

fn nonzero_scale(p: f64) -> f64 {
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

/// A fitted normalization: the dataset-level scale is computed once, then
/// read-only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub spec: NormalizationSpec,
    pub global_scale: f64,
}

impl Normalizer {
    pub fn fit<'a>(
        spec: NormalizationSpec,
        examples: impl IntoIterator<Item = &'a MixtureExample>,
        cfg: &StftConfig,
    ) -> Result<Self> {
        let global_scale = match spec {
            NormalizationSpec::GlobalPeak => {
                let mut p: f64 = 0.0;
                for ex in examples {
                    p = p.max(peak(&stft(&ex.mixture, cfg)?.magnitude));
                }
                nonzero_scale(p)
            }
            NormalizationSpec::GlobalRms => {
                let (mut sq, mut n) = (0.0, 0usize);
                for ex in examples {
                    let m = stft(&ex.mixture, cfg)?.magnitude;
                    sq += m.iter().map(|v| v * v).sum::<f64>();
                    n += m.len();
                }
                nonzero_scale(if n > 0 { (sq / n as f64).sqrt() } else { 0.0 })
            }
            _ => 1.0,
        };
        Ok(Self { spec, global_scale })
    }

    pub fn state_for(&self, mixture_magnitude: &Array2<f64>) -> NormState {
        NormState {
            scale: match self.spec {
                NormalizationSpec::None => 1.0,
                NormalizationSpec::GlobalPeak | NormalizationSpec::GlobalRms => self.global_scale,
                NormalizationSpec::ExamplePeak => nonzero_scale(peak(mixture_magnitude)),
            },
        }
    }
}

/// One record ready for the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// Normalized mixture magnitude, `[freq_bins, frames]`.
    pub mixture: Array2<f64>,
    /// Normalized component magnitudes, one per component.
    pub components: Vec<Array2<f64>>,
    pub mixture_phase: Array2<f64>,
    pub norm: NormState,
    pub source_length: usize,
    pub sample_rate: f64,
    /// Ground-truth component waveforms for waveform-domain scoring.
    pub truth: Vec<Waveform>,
}

pub fn preprocess(example: &MixtureExample, cfg: &StftConfig, normalizer: &Normalizer) -> Result<Prepared> {
    let mix = stft(&example.mixture, cfg)?;
    let norm = normalizer.state_for(&mix.magnitude);
    let components = example
        .components
        .iter()
        .map(|c| stft(c, cfg).map(|s| norm.normalize(&s.magnitude)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        mixture: norm.normalize(&mix.magnitude),
        components,
        mixture_phase: mix.phase,
        norm,
        source_length: example.len(),
        sample_rate: example.sample_rate(),
        truth: example.components.clone(),
    })
}

/// De-normalize `magnitude`, pair it with `phase` and invert.
pub fn postprocess(
    magnitude: &Array2<f64>,
    phase: &Array2<f64>,
    cfg: &StftConfig,
    norm: &NormState,
    source_length: usize,
    sample_rate: f64,
) -> Result<Waveform> {
    if magnitude.dim() != phase.dim() {
        return Err(CassError::shape(format!("{:?}", phase.dim()), format!("{:?}", magnitude.dim())));
    }
    let spec = Spectrogram {
        magnitude: norm.denormalize(magnitude).mapv(|v| v.max(0.0)),
        phase: phase.clone(),
        config: cfg.clone(),
        source_length,
        sample_rate,
    };
    istft(&spec)
}
