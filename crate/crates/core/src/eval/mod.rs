//! Relative p-norm errors, error tables, cross-discriminator analysis and plots.

mod plot;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, Array4, Axis};

pub use plot::{plot_discriminator_outputs, plot_error_curves, CurveSeries};

use crate::error::{CassError, Result};
use crate::model::{CassModel, Mode};
use crate::real::Real;
use crate::spectro::{postprocess, Prepared, StftConfig};
use crate::trainer::TensorSet;

/// Outputs below this are counted as "judged fake".
pub const FAKE_THRESHOLD: f64 = 0.5;

/// Batch size used for every evaluation pass, so results do not depend on the caller.
pub const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Inf];
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Inf => "Linf",
        })
    }
}

/// `‖recon − truth‖_p / ‖truth‖_p`, accumulated in `f64`.
pub fn relative_error<T: Real>(
    recon: impl IntoIterator<Item = T>,
    truth: impl IntoIterator<Item = T>,
    norm: Norm,
) -> Result<f64> {
    let mut recon = recon.into_iter();
    let mut truth = truth.into_iter();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    loop {
        match (recon.next(), truth.next()) {
            (Some(r), Some(t)) => {
                let (r, t) = (r.as_f64(), t.as_f64());
                let d = (r - t).abs();
                match norm {
                    Norm::L1 => {
                        num += d;
                        den += t.abs();
                    }
                    Norm::L2 => {
                        num += d * d;
                        den += t * t;
                    }
                    Norm::Inf => {
                        num = num.max(d);
                        den = den.max(t.abs());
                    }
                }
            }
            (None, None) => break,
            _ => return Err(CassError::arg("relative_error needs equally sized inputs")),
        }
    }
    if norm == Norm::L2 {
        num = num.sqrt();
        den = den.sqrt();
    }
    if den == 0.0 || !den.is_finite() {
        return Err(CassError::Domain(format!("relative {norm} error undefined: reference has norm {den}")));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Spectrogram,
    Waveform,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Spectrogram => "spectrogram",
            Domain::Waveform => "waveform",
        })
    }
}

impl FromStr for Domain {
    type Err = CassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectrogram" => Ok(Domain::Spectrogram),
            "waveform" => Ok(Domain::Waveform),
            other => Err(CassError::config(format!("unknown evaluation domain `{other}`"))),
        }
    }
}

/// Mean relative errors of one component under one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub component: usize,
    pub name: String,
    pub mode: Mode,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("{} / {}", self.name, self.mode)
    }

    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Inf => self.linf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub dataset: String,
    pub domain: Domain,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    /// Rows sorted by component index, then mode.
    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| (a.component, a.mode).cmp(&(b.component, b.mode)));
        self
    }

    /// Concatenates reports over different modes into one table.
    pub fn combine(reports: &[ErrorReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| CassError::arg("no reports to combine"))?;
        let mut seeds = Vec::new();
        let mut rows = Vec::new();
        for r in reports {
            if r.domain != first.domain {
                return Err(CassError::arg("cannot combine reports from different domains"));
            }
            for s in &r.seeds {
                if !seeds.contains(s) {
                    seeds.push(*s);
                }
            }
            rows.extend(r.rows.iter().cloned());
        }
        Ok(Self {
            dataset: first.dataset.clone(),
            domain: first.domain,
            seeds,
            rows,
        }
        .sorted())
    }

    /// Averages rows sharing (component, mode), e.g. across seeds.
    pub fn mean_by_mode(&self) -> Self {
        let mut groups: Vec<(ReportRow, usize)> = Vec::new();
        for row in &self.rows {
            match groups.iter_mut().find(|(g, _)| g.component == row.component && g.mode == row.mode) {
                Some((g, n)) => {
                    g.l1 += row.l1;
                    g.l2 += row.l2;
                    g.linf += row.linf;
                    *n += 1;
                }
                None => groups.push((row.clone(), 1)),
            }
        }
        let rows = groups
            .into_iter()
            .map(|(mut g, n)| {
                let n = n as f64;
                g.l1 /= n;
                g.l2 /= n;
                g.linf /= n;
                g
            })
            .collect();
        Self {
            rows,
            ..self.clone()
        }
        .sorted()
    }
}

/// Anything that maps a batch of mixtures to `K` component estimates.
///
/// Implemented by [`CassModel`]; tests can supply oracle separators.
pub trait Separator {
    fn k(&self) -> usize;
    fn mode(&self) -> Mode;
    /// `mixtures` is `[B, 1, H, W]`; returns `K` tensors of the same shape.
    fn separate(&self, mixtures: &Array4<f64>) -> Result<Vec<Array4<f64>>>;
}

impl<T: Real> Separator for CassModel<T> {
    fn k(&self) -> usize {
        self.components.len()
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn separate(&self, mixtures: &Array4<f64>) -> Result<Vec<Array4<f64>>> {
        let x = mixtures.mapv(T::lit);
        self.components
            .iter()
            .map(|c| c.reconstruct(&x).map(|y| y.mapv(|v| v.as_f64())))
            .collect()
    }
}

/// What an evaluation is about, for labelling the report.
#[derive(Debug, Clone)]
pub struct ReportContext<'a> {
    pub dataset: &'a str,
    pub component_names: &'a [String],
    pub seed: u64,
    pub stft: &'a StftConfig,
}

/// Mean relative L1/L2/L∞ errors per component over `test`.
///
/// In the waveform domain every estimate is inverted with the mixture phase
/// and compared against the true component waveform.
pub fn evaluate_report(
    separator: &dyn Separator,
    test: &[Prepared],
    domain: Domain,
    ctx: &ReportContext<'_>,
) -> Result<ErrorReport> {
    if test.is_empty() {
        return Err(CassError::arg("test split is empty"));
    }
    let k = separator.k();
    if ctx.component_names.len() != k {
        return Err(CassError::arg(format!(
            "{} component names for {k} components",
            ctx.component_names.len()
        )));
    }
    let tensors = TensorSet::<f64>::from_prepared(test)?;
    let mut sums = vec![[0.0f64; 3]; k];
    for (chunk_idx, batch) in tensors.chunks(EVAL_CHUNK).enumerate() {
        let estimates = separator.separate(&batch.mixture)?;
        if estimates.len() != k {
            return Err(CassError::arg(format!("separator returned {} estimates for K={k}", estimates.len())));
        }
        for (i, est) in estimates.iter().enumerate() {
            for (b, e) in est.axis_iter(Axis(0)).enumerate() {
                let rec = &test[chunk_idx * EVAL_CHUNK + b];
                for (n, norm) in Norm::ALL.into_iter().enumerate() {
                    sums[i][n] += match domain {
                        Domain::Spectrogram => relative_error(
                            e.iter().copied(),
                            batch.targets[i].index_axis(Axis(0), b).iter().copied(),
                            norm,
                        )?,
                        Domain::Waveform => {
                            let mag: Array2<f64> = e.index_axis(Axis(0), 0).to_owned();
                            let wave = postprocess(
                                &mag,
                                &rec.mixture_phase,
                                ctx.stft,
                                &rec.norm,
                                rec.source_length,
                                rec.sample_rate,
                            )?;
                            relative_error(
                                wave.samples().iter().copied(),
                                rec.truth[i].samples().iter().copied(),
                                norm,
                            )?
                        }
                    };
                }
            }
        }
    }
    let n = test.len() as f64;
    let rows = sums
        .iter()
        .enumerate()
        .map(|(i, s)| ReportRow {
            component: i,
            name: ctx.component_names[i].clone(),
            mode: separator.mode(),
            l1: s[0] / n,
            l2: s[1] / n,
            linf: s[2] / n,
        })
        .collect();
    Ok(ErrorReport {
        dataset: ctx.dataset.to_string(),
        domain,
        seeds: vec![ctx.seed],
        rows,
    }
    .sorted())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// Four columns: label, L1, L2, L∞.
pub fn render_table(report: &ErrorReport, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("label,L1,L2,Linf\n");
            for r in &report.rows {
                writeln!(out, "{},{},{},{}", r.label(), r.l1, r.l2, r.linf).expect("writing to a String");
            }
        }
        TableFormat::Text => {
            let width = report.rows.iter().map(|r| r.label().chars().count()).max().unwrap_or(0).max(5);
            writeln!(
                out,
                "# dataset {} | {} domain | seeds {:?}",
                report.dataset, report.domain, report.seeds
            )
            .expect("writing to a String");
            writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>10}", "model", "L1", "L2", "Linf").expect("writing to a String");
            for r in &report.rows {
                writeln!(out, "{:<width$}  {:>10.6}  {:>10.6}  {:>10.6}", r.label(), r.l1, r.l2, r.linf)
                    .expect("writing to a String");
            }
        }
    }
    out
}

/// Parses the CSV produced by [`render_table`] into `(label, [L1, L2, L∞])` rows.
pub fn parse_table_csv(text: &str) -> Result<Vec<(String, [f64; 3])>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("label,L1,L2,Linf") {
        return Err(CassError::arg("table csv: unexpected header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(CassError::arg(format!("table csv: expected 4 fields in `{line}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| CassError::arg(format!("table csv: malformed number `{s}`")))
            };
            Ok((f[0].to_string(), [num(f[1])?, num(f[2])?, num(f[3])?]))
        })
        .collect()
}

/// Discriminator `judge` applied to reconstructions from auto-encoder `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAnalysisRecord {
    pub source: usize,
    pub judge: usize,
    pub outputs: Vec<f64>,
    pub fraction_fake: f64,
}

pub fn fraction_fake(outputs: &[f64]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    outputs.iter().filter(|&&p| p < FAKE_THRESHOLD).count() as f64 / outputs.len() as f64
}

/// One record for every ordered pair `source → judge` with `source ≠ judge`,
/// ordered by source then judge.
pub fn cross_discriminator_analysis<T: Real>(model: &CassModel<T>, test: &TensorSet<T>) -> Result<Vec<CrossAnalysisRecord>> {
    if !model.mode.uses_discriminators() {
        return Err(CassError::config(
            "cross-discriminator analysis needs discriminators; baseline models have none",
        ));
    }
    if test.is_empty() {
        return Err(CassError::arg("test split is empty"));
    }
    let k = model.k();
    let mut outputs = vec![vec![Vec::new(); k]; k];
    for batch in test.chunks(EVAL_CHUNK) {
        for (source, c) in model.components.iter().enumerate() {
            let recon = c.reconstruct(&batch.mixture)?;
            for (judge, d) in model.components.iter().enumerate() {
                if judge != source {
                    outputs[source][judge].extend(d.discriminate(&recon)?.iter().map(|p| p.as_f64()));
                }
            }
        }
    }
    let mut records = Vec::new();
    for (source, row) in outputs.into_iter().enumerate() {
        for (judge, outs) in row.into_iter().enumerate() {
            if judge != source {
                records.push(CrossAnalysisRecord {
                    source,
                    judge,
                    fraction_fake: fraction_fake(&outs),
                    outputs: outs,
                });
            }
        }
    }
    Ok(records)
}
