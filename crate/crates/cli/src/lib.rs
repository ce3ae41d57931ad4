//! Command-line experiment runner.
//!
//! ```text
//! cass --config exp.txt gen-data
//! cass --config exp.txt train --mode baseline
//! cass --config exp.txt eval
//! cass --config exp.txt cross-analysis
//! cass --config exp.txt compare <run dir or config>...
//! ```
//!
//! Artifacts go under the config's `output` directory (or `--out`):
//! `data/<kind>-<hash>-s<seed>` for datasets and
//! `runs/<mode>-<hash>-s<seed>` for training runs, with evaluation and
//! cross-analysis results in subdirectories of the run and comparisons in
//! `compare/<hash>`. Existing artifacts are never overwritten silently.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

use std::ffi::OsString;
use std::path::PathBuf;

use cass_core::eval::{render_table, TableFormat};
use cass_core::Mode;
use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, Result, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

use commands::RunRef;

#[derive(Debug, Parser)]
#[command(name = "cass", version, about = "Cross adversarial source separation experiments")]
pub struct Cli {
    /// Experiment config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Training seed (overrides `train.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output root (overrides `output`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Continue an existing run from its latest checkpoint.
    #[arg(long, global = true)]
    pub resume: bool,

    /// Suppress per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or ingest) the dataset described by the config.
    GenData,
    /// Train the model described by the config.
    Train {
        /// Training mode (overrides `train.mode`).
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Score a trained model on the test split.
    Eval {
        #[arg(long)]
        mode: Option<Mode>,
        /// Model directory to score instead of the run's final model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Feed each autoencoder's outputs to every discriminator.
    CrossAnalysis {
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Overlay error curves and tabulate errors of several runs.
    Compare {
        /// Run directories or config files (resolved with --seed / --out).
        /// With none, the three modes of --config are compared.
        inputs: Vec<PathBuf>,
    },
}

/// Loads `path` and applies the command-line overrides.
pub fn resolve_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<&std::path::Path>,
    mode: Option<Mode>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o.to_path_buf();
    }
    if let Some(m) = mode {
        cfg.train.mode = m;
        cfg.loss.validate(cfg.k(), m)?;
    }
    Ok(cfg)
}

impl Cli {
    fn config_for(&self, mode: Option<Mode>) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::usage("--config <file> is required for this command"))?;
        resolve_config(path, self.seed, self.out.as_deref(), mode)
    }

    pub fn execute(&self) -> Result<()> {
        match &self.command {
            Command::GenData => {
                let cfg = self.config_for(None)?;
                let o = commands::gen_data(&cfg)?;
                let state = if o.created { "wrote" } else { "up to date:" };
                println!("{state} {} ({} records, digest {})", o.dir.display(), o.records, o.digest);
            }
            Command::Train { mode } => {
                let cfg = self.config_for(*mode)?;
                let o = commands::train(&cfg, self.resume, !self.quiet)?;
                if let Some(e) = o.resumed_from {
                    println!("resumed at epoch {e}");
                }
                println!("trained {} epochs into {}", o.logs.len(), o.run_dir.display());
            }
            Command::Eval { mode, checkpoint } => {
                let cfg = self.config_for(*mode)?;
                let o = commands::eval(&cfg, checkpoint.as_deref())?;
                for r in &o.reports {
                    print!("{}", render_table(r, TableFormat::Text));
                }
                println!("tables in {}", o.dir.display());
            }
            Command::CrossAnalysis { mode, checkpoint } => {
                let cfg = self.config_for(*mode)?;
                let o = commands::cross_analysis(&cfg, checkpoint.as_deref())?;
                print!("{}", commands::cross_summary_csv(&o.records, &cfg.dataset.component_names));
                println!("records in {}", o.dir.display());
            }
            Command::Compare { inputs } => {
                let mut runs = Vec::new();
                for input in inputs {
                    if input.is_dir() {
                        runs.push(RunRef::Dir(input.clone()));
                    } else {
                        let cfg = resolve_config(input, self.seed, self.out.as_deref(), None)?;
                        runs.push(RunRef::Config(Box::new(cfg)));
                    }
                }
                if runs.is_empty() {
                    for m in Mode::ALL {
                        runs.push(RunRef::Config(Box::new(self.config_for(Some(m))?)));
                    }
                }
                let o = commands::compare(&runs, self.out.as_deref())?;
                for w in &o.warnings {
                    eprintln!("warning: {w}");
                }
                for r in &o.reports {
                    print!("{}", render_table(r, TableFormat::Text));
                }
                println!("comparison in {}", o.dir.display());
            }
        }
        Ok(())
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.execute() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
