//! Resumable training checkpoints: the model files plus optimiser moments,
//! progress and the epoch log so far.

use std::path::Path;

use crate::binio;
use crate::error::{CassError, Result};
use crate::kv::KvDoc;
use crate::model::{load_model, save_model};
use crate::real::Real;

use super::{read_log_csv, write_log_csv, AdamState, ComponentOptim, TrainConfig, Trainer};

pub const TRAINER_MANIFEST: &str = "trainer.txt";
const LOG_FILE: &str = "epochs.csv";

fn save_adam<T: Real>(state: &AdamState<T>, path: &Path) -> Result<()> {
    binio::save_arrays(path, &state.tensors())
}

fn load_adam<T: Real>(path: &Path, step: u64, expected: &AdamState<T>) -> Result<AdamState<T>> {
    let state = AdamState::from_tensors(binio::load_arrays(path)?, step)?;
    let shapes = |s: &AdamState<T>| s.m.iter().map(|a| a.shape().to_vec()).collect::<Vec<_>>();
    if shapes(&state) != shapes(expected) {
        return Err(CassError::format(path, "optimiser state does not match the model"));
    }
    Ok(state)
}

impl<T: Real> Trainer<T> {
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        save_model(&self.model, dir)?;
        let mut doc = KvDoc::new();
        doc.set("epochs_completed", self.epochs_completed());
        self.config.write_kv(&mut doc, "train");
        for (i, o) in self.optim.iter().enumerate() {
            save_adam(&o.ae, &dir.join(format!("optim_{i}_ae.bin")))?;
            doc.set(format!("optim.{i}.ae_step"), o.ae.step);
            if let Some(d) = &o.disc {
                save_adam(d, &dir.join(format!("optim_{i}_disc.bin")))?;
                doc.set(format!("optim.{i}.disc_step"), d.step);
            }
        }
        write_log_csv(&self.logs, &dir.join(LOG_FILE))?;
        doc.write(&dir.join(TRAINER_MANIFEST))
    }

    /// Restores a checkpoint written by [`save_checkpoint`](Self::save_checkpoint).
    /// `config` may extend `epochs` but must otherwise agree with the saved run.
    pub fn load_checkpoint(dir: &Path, config: TrainConfig) -> Result<Self> {
        let manifest = dir.join(TRAINER_MANIFEST);
        let doc = KvDoc::read(&manifest)?;
        let saved = TrainConfig::read_kv(&doc, "train")?;
        let comparable = TrainConfig {
            epochs: saved.epochs,
            checkpoint_every: saved.checkpoint_every,
            ..config.clone()
        };
        if comparable != saved {
            return Err(CassError::config(format!(
                "checkpoint in {} was written with a different training configuration",
                dir.display()
            )));
        }
        let mut trainer = Trainer::new(load_model(dir)?, config)?;
        for i in 0..trainer.optim.len() {
            let fresh = trainer.optim[i].clone();
            let ae = load_adam(
                &dir.join(format!("optim_{i}_ae.bin")),
                doc.parse_required(&format!("optim.{i}.ae_step"))?,
                &fresh.ae,
            )?;
            let disc = match &fresh.disc {
                Some(d) => Some(load_adam(
                    &dir.join(format!("optim_{i}_disc.bin")),
                    doc.parse_required(&format!("optim.{i}.disc_step"))?,
                    d,
                )?),
                None => None,
            };
            trainer.optim[i] = ComponentOptim { ae, disc };
        }
        trainer.logs = read_log_csv(&dir.join(LOG_FILE))?;
        let completed: usize = doc.parse_required("epochs_completed")?;
        if trainer.logs.len() != completed {
            return Err(CassError::format(&manifest, "epoch log length disagrees with progress"));
        }
        Ok(trainer)
    }
}
