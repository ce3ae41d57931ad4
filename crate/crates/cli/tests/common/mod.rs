#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cass_cli::ExperimentConfig;

/// A config small enough to train in well under a second per epoch.
pub const TINY: &str = "\
dataset.kind = ecg
dataset.size = 10
dataset.test_fraction = 0.3
dataset.ecg.sample_rate = 125
stft.window_length = 64
network.latent_dim = 8
network.channels = 2,4
train.epochs = 2
train.batch_size = 4
train.lr_ae = 1e-3
train.lr_disc = 1e-4
eval.last_k = 1
";

pub fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(TINY).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

/// Writes `text` plus an `output` line into `dir/exp.txt`.
pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.txt");
    std::fs::write(&path, format!("output = {}\n{text}", dir.join("out").display())).unwrap();
    path
}

pub fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["cass", "--quiet"];
    full.extend_from_slice(args);
    cass_cli::run(full)
}
