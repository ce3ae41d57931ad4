//! The five experiment commands. Each takes a fully resolved
//! [`ExperimentConfig`] and returns a summary of what it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cass_core::eval::{
    cross_discriminator_analysis, evaluate_report, plot_discriminator_outputs, plot_error_curves, render_table,
    CrossAnalysisRecord, CurveSeries, Domain, ReportContext, TableFormat,
};
use cass_core::model::{load_model, save_model, MODEL_MANIFEST};
use cass_core::spectro::{preprocess, Normalizer, Prepared};
use cass_core::synthgen::{
    ingest_audio_stems, make_ecg_dataset, DATASET_MANIFEST, make_harmonic_dataset, make_ppg_dataset, Dataset, MixtureExample,
};
use cass_core::trainer::{read_log_csv, write_log_csv, TensorSet, Trainer, TRAINER_MANIFEST};
use cass_core::{CassError, CassModel, EpochLog, ErrorReport, Mode};

use crate::config::{sha256_hex, DatasetSource, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::provenance::{hash_tree, publish, read_digest, staging_dir, Provenance};

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "epochs.csv";
pub const MODEL_DIR: &str = "model";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const DOMAINS: [Domain; 2] = [Domain::Spectrogram, Domain::Waveform];

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CassError::io(path, e).into()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io(path))
}

pub fn table_file(domain: Domain, format: TableFormat) -> String {
    let ext = match format {
        TableFormat::Text => "txt",
        TableFormat::Csv => "csv",
    };
    format!("table_{domain}.{ext}")
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone)]
pub struct GenDataOutcome {
    pub dir: PathBuf,
    /// False when an identical dataset was already present.
    pub created: bool,
    pub digest: String,
    pub records: usize,
}

fn build_examples(cfg: &ExperimentConfig) -> Result<Vec<MixtureExample>> {
    let d = &cfg.dataset;
    Ok(match &d.source {
        DatasetSource::Ecg(s) => make_ecg_dataset(d.size, s, d.seed)?,
        DatasetSource::Ppg(s) => make_ppg_dataset(d.size, s, d.seed)?,
        DatasetSource::Harmonic(s) => make_harmonic_dataset(d.size, s, d.seed)?,
        DatasetSource::Audio(a) => {
            let mut segments = ingest_audio_stems(&a.stems, a.mixture.as_deref(), a.segment_length)?;
            segments.truncate(d.size);
            segments
        }
    })
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<GenDataOutcome> {
    let examples = build_examples(cfg)?;
    let records = examples.len();
    let d = &cfg.dataset;
    let dataset = Dataset::new(d.source.kind(), d.component_names.clone(), d.seed, examples, d.test_fraction)?;
    let dest = cfg.data_dir();
    let staging = staging_dir(&dest)?;
    dataset.save(&staging)?;
    let digest = Provenance::new("gen-data", &cfg.dataset_hash(), d.seed).write(&staging)?;
    let created = publish(&staging, &dest)?;
    Ok(GenDataOutcome {
        dir: dest,
        created,
        digest,
        records,
    })
}

// ------------------------------------------------------------ shared setup

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = cfg.data_dir();
    if !dir.join(DATASET_MANIFEST).is_file() {
        return Err(CliError::data(format!(
            "dataset not found at {}; run `cass gen-data` with this config first",
            dir.display()
        )));
    }
    let ds = Dataset::load(&dir)?;
    if ds.component_names != cfg.dataset.component_names {
        return Err(CliError::data(format!(
            "dataset at {} has components {:?}, config expects {:?}",
            dir.display(),
            ds.component_names,
            cfg.dataset.component_names
        )));
    }
    Ok(ds)
}

/// Spectrogram records of both splits; normalization is fitted on the
/// training split only.
pub struct PreparedSplits {
    pub train: Vec<Prepared>,
    pub test: Vec<Prepared>,
    pub normalizer: Normalizer,
}

pub fn prepare(cfg: &ExperimentConfig, ds: &Dataset) -> Result<PreparedSplits> {
    let normalizer = Normalizer::fit(cfg.normalization, ds.train(), &cfg.stft)?;
    let run = |records: Vec<&MixtureExample>| {
        records
            .into_iter()
            .map(|ex| preprocess(ex, &cfg.stft, &normalizer))
            .collect::<cass_core::Result<Vec<_>>>()
    };
    let train = run(ds.train())?;
    let test = run(ds.test())?;
    if train.is_empty() || test.is_empty() {
        return Err(CliError::data("both the train and the test split must be nonempty"));
    }
    Ok(PreparedSplits {
        train,
        test,
        normalizer,
    })
}

fn dataset_digest(cfg: &ExperimentConfig) -> Result<String> {
    read_digest(&cfg.data_dir())
}

fn load_trained_model(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(PathBuf, CassModel<f32>)> {
    let dir = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.run_dir().join(MODEL_DIR));
    if !dir.join(MODEL_MANIFEST).is_file() {
        return Err(CliError::data(format!(
            "no trained model at {}; run `cass train` with this config first",
            dir.display()
        )));
    }
    let model = load_model::<f32>(&dir)?;
    if model.k() != cfg.k() {
        return Err(CliError::data(format!(
            "model at {} separates {} components, config has {}",
            dir.display(),
            model.k(),
            cfg.k()
        )));
    }
    Ok((dir, model))
}

/// Short hash of a directory's contents, used to key derived artifacts.
fn tree_id(dir: &Path) -> Result<String> {
    let listing: String = hash_tree(dir, &[])?
        .into_iter()
        .map(|(p, h)| format!("{p} {h}\n"))
        .collect();
    Ok(sha256_hex(listing.as_bytes()))
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub logs: Vec<EpochLog>,
    pub resumed_from: Option<usize>,
}

/// Replaces `dest` with what `fill` writes into a fresh sibling directory.
/// Only used for a run's own mutable state (its checkpoint and latest model).
fn replace_dir(dest: &Path, fill: impl FnOnce(&Path) -> cass_core::Result<()>) -> cass_core::Result<()> {
    let name = dest.file_name().expect("run subdirectories have names").to_string_lossy();
    let staging = dest.with_file_name(format!(".{name}.staging"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CassError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| CassError::io(&staging, e))?;
    fill(&staging)?;
    if dest.exists() {
        fs::remove_dir_all(dest).map_err(|e| CassError::io(dest, e))?;
    }
    fs::rename(&staging, dest).map_err(|e| CassError::io(dest, e))
}

fn progress_line(log: &EpochLog, epochs: usize, names: &[String]) -> String {
    let mut line = format!("epoch {}/{}", log.epoch + 1, epochs);
    for (c, name) in log.components.iter().zip(names) {
        write!(line, " | {name}: ae {:.5}", c.ae_loss).expect("writing to a String");
        if let Some(d) = c.disc_loss {
            write!(line, " disc {d:.4}").expect("writing to a String");
        }
        if let Some(t) = c.test_l2 {
            write!(line, " test_l2 {t:.4}").expect("writing to a String");
        }
    }
    write!(line, " ({:.1}s)", log.seconds).expect("writing to a String");
    line
}

pub fn train(cfg: &ExperimentConfig, resume: bool, verbose: bool) -> Result<TrainOutcome> {
    let ds = load_dataset(cfg)?;
    let splits = prepare(cfg, &ds)?;
    let train_set = TensorSet::<f32>::from_prepared(&splits.train)?;
    let test_set = TensorSet::<f32>::from_prepared(&splits.test)?;
    let spec = cfg.network.spec(train_set.input_shape(), &cfg.train);
    spec.validate()?;

    let run = cfg.run_dir();
    let checkpoint = run.join(CHECKPOINT_DIR);
    let mut resumed_from = None;
    let mut trainer = if run.exists() {
        if !resume {
            return Err(CliError::usage(format!(
                "run directory {} already exists; pass --resume to continue it, or change the seed or --out",
                run.display()
            )));
        }
        if checkpoint.join(TRAINER_MANIFEST).is_file() {
            let t = Trainer::<f32>::load_checkpoint(&checkpoint, cfg.train.clone())?;
            if t.model.spec() != &spec {
                return Err(CliError::data(format!(
                    "checkpoint in {} was trained on a different network shape",
                    checkpoint.display()
                )));
            }
            resumed_from = Some(t.epochs_completed());
            t
        } else {
            Trainer::new(CassModel::build(&spec, cfg.k(), cfg.train.mode, cfg.loss.clone(), cfg.train.seed)?, cfg.train.clone())?
        }
    } else {
        fs::create_dir_all(&run).map_err(io(&run))?;
        Trainer::new(CassModel::build(&spec, cfg.k(), cfg.train.mode, cfg.loss.clone(), cfg.train.seed)?, cfg.train.clone())?
    };
    write_text(&run.join(CONFIG_FILE), &cfg.to_text())?;

    let names = &cfg.dataset.component_names;
    let every = cfg.train.checkpoint_every;
    let epochs = cfg.train.epochs;
    let fitted = trainer.fit_with(&train_set, Some(&test_set), |t| {
        let log = t.logs.last().expect("an epoch just finished");
        if verbose {
            eprintln!("{}", progress_line(log, epochs, names));
        }
        let done = t.epochs_completed();
        if every > 0 && done % every == 0 && done < epochs {
            replace_dir(&checkpoint, |dir| t.save_checkpoint(dir))?;
        }
        Ok(())
    });
    if let Err(e) = fitted {
        // Keep the log of the epochs that did finish for diagnosis.
        write_log_csv(&trainer.logs, &run.join(LOG_FILE))?;
        return Err(e.into());
    }

    replace_dir(&checkpoint, |dir| trainer.save_checkpoint(dir))?;
    replace_dir(&run.join(MODEL_DIR), |dir| save_model(&trainer.model, dir))?;
    write_log_csv(&trainer.logs, &run.join(LOG_FILE))?;
    let mut norm = cass_core::kv::KvDoc::new();
    norm.set("normalization", splits.normalizer.spec);
    norm.set("scale", splits.normalizer.global_scale);
    norm.write(&run.join("normalization.txt"))?;

    let mut prov = Provenance::new("train", &cfg.run_hash(), cfg.train.seed)
        .input("dataset", dataset_digest(cfg)?)
        .input("epochs", epochs.to_string());
    if let Some(e) = resumed_from {
        prov = prov.input("resumed_from_epoch", e.to_string());
    }
    prov.write_selected(&run, &[CONFIG_FILE, MODEL_DIR, CHECKPOINT_DIR, LOG_FILE, "normalization.txt"])?;
    Ok(TrainOutcome {
        run_dir: run,
        logs: trainer.logs,
        resumed_from,
    })
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub dir: PathBuf,
    pub reports: Vec<ErrorReport>,
    pub created: bool,
}

fn report_context<'a>(cfg: &'a ExperimentConfig, dataset: &'a str) -> ReportContext<'a> {
    ReportContext {
        dataset,
        component_names: &cfg.dataset.component_names,
        seed: cfg.train.seed,
        stft: &cfg.stft,
    }
}

/// Spectrogram- and waveform-domain reports of `model` on the test split.
pub fn score(cfg: &ExperimentConfig, model: &CassModel<f32>) -> Result<Vec<ErrorReport>> {
    let ds = load_dataset(cfg)?;
    let splits = prepare(cfg, &ds)?;
    let name = ds.kind.to_string();
    let ctx = report_context(cfg, &name);
    DOMAINS
        .iter()
        .map(|&d| Ok(evaluate_report(model, &splits.test, d, &ctx)?))
        .collect()
}

fn write_tables(dir: &Path, reports: &[ErrorReport]) -> Result<()> {
    for r in reports {
        for format in [TableFormat::Text, TableFormat::Csv] {
            write_text(&dir.join(table_file(r.domain, format)), &render_table(r, format))?;
        }
    }
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalOutcome> {
    let (model_dir, model) = load_trained_model(cfg, checkpoint)?;
    let reports = score(cfg, &model)?;
    let model_id = tree_id(&model_dir)?;
    let dest = cfg.run_dir().join(format!("eval-{}", &model_id[..8]));
    let staging = staging_dir(&dest)?;
    write_tables(&staging, &reports)?;
    let log_path = cfg.run_dir().join(LOG_FILE);
    if checkpoint.is_none() && log_path.is_file() {
        let series = [CurveSeries {
            label: model.mode.to_string(),
            logs: read_log_csv(&log_path)?,
        }];
        plot_error_curves(&series, &cfg.dataset.component_names, &staging.join("plots"), cfg.eval.last_k)?;
    }
    Provenance::new("eval", &cfg.run_hash(), cfg.train.seed)
        .input("dataset", dataset_digest(cfg)?)
        .input("model", model_id)
        .write(&staging)?;
    let created = publish(&staging, &dest)?;
    Ok(EvalOutcome { dir: dest, reports, created })
}

// ---------------------------------------------------------- cross-analysis

#[derive(Debug, Clone)]
pub struct CrossOutcome {
    pub dir: PathBuf,
    pub records: Vec<CrossAnalysisRecord>,
    pub created: bool,
}

pub fn cross_summary_csv(records: &[CrossAnalysisRecord], names: &[String]) -> String {
    let mut out = String::from("source,judge,source_name,judge_name,samples,fraction_fake,mean_output\n");
    for r in records {
        let mean = r.outputs.iter().sum::<f64>() / r.outputs.len().max(1) as f64;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.source,
            r.judge,
            names[r.source],
            names[r.judge],
            r.outputs.len(),
            r.fraction_fake,
            mean
        )
        .expect("writing to a String");
    }
    out
}

pub fn cross_analysis(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<CrossOutcome> {
    let (model_dir, model) = load_trained_model(cfg, checkpoint)?;
    if model.mode == Mode::Baseline {
        return Err(CliError::usage(
            "cross-discriminator analysis needs discriminators, and baseline mode trains none; \
             train with train.mode = cass or cass_cross",
        ));
    }
    let ds = load_dataset(cfg)?;
    let splits = prepare(cfg, &ds)?;
    let test = TensorSet::<f32>::from_prepared(&splits.test)?;
    let records = cross_discriminator_analysis(&model, &test)?;
    let names = &cfg.dataset.component_names;

    let model_id = tree_id(&model_dir)?;
    let dest = cfg.run_dir().join(format!("cross-{}", &model_id[..8]));
    let staging = staging_dir(&dest)?;
    write_text(&staging.join("cross_summary.csv"), &cross_summary_csv(&records, names))?;
    let mut outputs = String::from("source,judge,sample,output\n");
    for r in &records {
        for (s, o) in r.outputs.iter().enumerate() {
            writeln!(outputs, "{},{},{},{}", r.source, r.judge, s, o).expect("writing to a String");
        }
    }
    write_text(&staging.join("cross_outputs.csv"), &outputs)?;
    plot_discriminator_outputs(&records, names, &staging.join("plots"))?;
    Provenance::new("cross-analysis", &cfg.run_hash(), cfg.train.seed)
        .input("dataset", dataset_digest(cfg)?)
        .input("model", model_id)
        .write(&staging)?;
    let created = publish(&staging, &dest)?;
    Ok(CrossOutcome {
        dir: dest,
        records,
        created,
    })
}

// ----------------------------------------------------------------- compare

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub dir: PathBuf,
    /// Mean over seeds per (component, mode), one per domain.
    pub reports: Vec<ErrorReport>,
    pub warnings: Vec<String>,
    pub created: bool,
}

/// Where compare reads one run from: an explicit run directory, or the run a
/// config (with the CLI overrides applied) resolves to.
#[derive(Debug, Clone)]
pub enum RunRef {
    Dir(PathBuf),
    Config(Box<ExperimentConfig>),
}

impl RunRef {
    fn resolve(&self) -> Result<(PathBuf, ExperimentConfig)> {
        let dir = match self {
            RunRef::Dir(d) => d.clone(),
            RunRef::Config(c) => c.run_dir(),
        };
        let cfg_path = dir.join(CONFIG_FILE);
        if !cfg_path.is_file() {
            return Err(CliError::data(format!("no training run at {}", dir.display())));
        }
        let mut cfg = ExperimentConfig::load(&cfg_path)?;
        if let RunRef::Config(c) = self {
            // The stored config records where the run lives; reuse the
            // caller's view so relative output paths resolve the same way.
            cfg.output = c.output.clone();
        }
        Ok((dir, cfg))
    }
}

pub fn compare(runs: &[RunRef], out: Option<&Path>) -> Result<CompareOutcome> {
    if runs.is_empty() {
        return Err(CliError::usage("compare needs at least one run directory or config"));
    }
    let mut loaded = Vec::new();
    for r in runs {
        loaded.push(r.resolve()?);
    }
    let names = loaded[0].1.dataset.component_names.clone();
    if let Some((d, _)) = loaded.iter().find(|(_, c)| c.dataset.component_names != names) {
        return Err(CliError::usage(format!(
            "run {} separates different components than the first run",
            d.display()
        )));
    }

    let mut series = Vec::new();
    let mut per_domain: Vec<Vec<ErrorReport>> = vec![Vec::new(); DOMAINS.len()];
    let mut ids = Vec::new();
    for (dir, cfg) in &loaded {
        let model_dir = dir.join(MODEL_DIR);
        let (_, model) = load_trained_model(cfg, Some(&model_dir))?;
        for (slot, report) in per_domain.iter_mut().zip(score(cfg, &model)?) {
            slot.push(report);
        }
        series.push(CurveSeries {
            label: format!("{} s{}", cfg.train.mode, cfg.train.seed),
            logs: read_log_csv(&dir.join(LOG_FILE))?,
        });
        ids.push(tree_id(&model_dir)?);
    }

    let mut warnings = Vec::new();
    let shortest = series.iter().map(|s| s.logs.len()).min().unwrap_or(0);
    if series.iter().any(|s| s.logs.len() != shortest) {
        warnings.push(format!(
            "runs have different epoch counts ({}); curves truncated to the first {shortest}",
            series.iter().map(|s| s.logs.len().to_string()).collect::<Vec<_>>().join(", ")
        ));
        for s in &mut series {
            s.logs.truncate(shortest);
        }
    }

    let reports = per_domain
        .iter()
        .map(|r| Ok(ErrorReport::combine(r)?.mean_by_mode()))
        .collect::<Result<Vec<_>>>()?;

    let root = out.map(Path::to_path_buf).unwrap_or_else(|| loaded[0].1.output.clone());
    let dest = root.join("compare").join(&sha256_hex(ids.join(",").as_bytes())[..8]);
    let staging = staging_dir(&dest)?;
    write_tables(&staging, &reports)?;
    plot_error_curves(&series, &names, &staging.join("plots"), loaded[0].1.eval.last_k)?;
    let mut prov = Provenance::new("compare", &sha256_hex(ids.join(",").as_bytes()), loaded[0].1.train.seed);
    for (i, id) in ids.iter().enumerate() {
        prov = prov.input(&format!("model.{i}"), id.clone());
    }
    prov.write(&staging)?;
    let created = publish(&staging, &dest)?;
    Ok(CompareOutcome {
        dir: dest,
        reports,
        warnings,
        created,
    })
}
