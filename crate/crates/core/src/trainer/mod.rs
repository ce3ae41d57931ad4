//! Alternating optimisation of the auto-encoders and discriminators.
//!
//! Per minibatch, components are visited in index order; each gets one AE
//! step and then, outside baseline mode, one discriminator step. In cross
//! mode the other components' reconstructions used by the cross terms are
//! taken from a snapshot made at the start of the minibatch.

mod adam;
mod data;
mod log;
mod state;

use std::time::Instant;

use ndarray::{Array4, ArrayViewD, ArrayViewMutD};
use rand::seq::SliceRandom;

pub use adam::{update_step, AdamState, BETA1, BETA2, EPSILON};
pub use data::TensorSet;
pub use log::{read_log_csv, write_log_csv, ComponentLog, EpochLog};
pub use state::TRAINER_MANIFEST;

use crate::error::{CassError, Result};
use crate::eval::{relative_error, Norm, EVAL_CHUNK};
use crate::kv::KvDoc;
use crate::losses::{self, Batch};
use crate::model::{CassModel, ComponentModel, Mode};
use crate::nn::Params;
use crate::real::Real;
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_ae: f64,
    pub lr_disc: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Test error is computed every `eval_every` epochs and after the last one.
    pub eval_every: usize,
    /// Checkpoint period in epochs for callers that persist progress; 0 means only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_ae: 1e-5,
            lr_disc: 1e-6,
            batch_size: 50,
            epochs: 500,
            seed: 0,
            mode: Mode::CassCross,
            eval_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr_ae", self.lr_ae), ("lr_disc", self.lr_disc)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(CassError::config(format!("{name} must be a positive number, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(CassError::config("batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(CassError::config("eval_every must be at least 1"));
        }
        Ok(())
    }

    pub fn write_kv(&self, doc: &mut KvDoc, prefix: &str) {
        doc.set(format!("{prefix}.lr_ae"), self.lr_ae);
        doc.set(format!("{prefix}.lr_disc"), self.lr_disc);
        doc.set(format!("{prefix}.batch_size"), self.batch_size);
        doc.set(format!("{prefix}.epochs"), self.epochs);
        doc.set(format!("{prefix}.seed"), self.seed);
        doc.set(format!("{prefix}.mode"), self.mode);
        doc.set(format!("{prefix}.eval_every"), self.eval_every);
        doc.set(format!("{prefix}.checkpoint_every"), self.checkpoint_every);
    }

    pub fn read_kv(doc: &KvDoc, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let key = |k: &str| format!("{prefix}.{k}");
        let cfg = Self {
            lr_ae: doc.parse_or(&key("lr_ae"), d.lr_ae)?,
            lr_disc: doc.parse_or(&key("lr_disc"), d.lr_disc)?,
            batch_size: doc.parse_or(&key("batch_size"), d.batch_size)?,
            epochs: doc.parse_or(&key("epochs"), d.epochs)?,
            seed: doc.parse_or(&key("seed"), d.seed)?,
            mode: doc.parse_or(&key("mode"), d.mode)?,
            eval_every: doc.parse_or(&key("eval_every"), d.eval_every)?,
            checkpoint_every: doc.parse_or(&key("checkpoint_every"), d.checkpoint_every)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimiser state for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentOptim<T> {
    pub ae: AdamState<T>,
    pub disc: Option<AdamState<T>>,
}

fn ae_tensors<T: Real>(c: &ComponentModel<T>) -> Vec<ArrayViewD<'_, T>> {
    let mut out = c.encoder.named_tensors();
    out.extend(c.decoder.named_tensors());
    out.into_iter().map(|(_, t)| t).collect()
}

fn ae_tensors_mut<T: Real>(c: &mut ComponentModel<T>) -> Vec<ArrayViewMutD<'_, T>> {
    let mut out = c.encoder.tensors_mut();
    out.extend(c.decoder.tensors_mut());
    out
}

fn disc_tensors<T: Real>(c: &ComponentModel<T>) -> Vec<ArrayViewD<'_, T>> {
    c.discriminator
        .as_ref()
        .map(|d| d.named_tensors().into_iter().map(|(_, t)| t).collect())
        .unwrap_or_default()
}

/// Where a step is happening, for non-finite diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepContext {
    pub epoch: usize,
    pub batch: usize,
}

/// A model together with its optimiser state and training history.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: CassModel<T>,
    pub config: TrainConfig,
    pub optim: Vec<ComponentOptim<T>>,
    pub logs: Vec<EpochLog>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: CassModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.mode != model.mode {
            return Err(CassError::config(format!(
                "training mode {} does not match model mode {}",
                config.mode, model.mode
            )));
        }
        let optim = model
            .components
            .iter()
            .map(|c| ComponentOptim {
                ae: AdamState::for_params(&ae_tensors(c)),
                disc: c
                    .discriminator
                    .as_ref()
                    .filter(|_| model.mode.uses_discriminators())
                    .map(|_| AdamState::for_params(&disc_tensors(c))),
            })
            .collect();
        Ok(Self {
            model,
            config,
            optim,
            logs: Vec::new(),
        })
    }

    pub fn epochs_completed(&self) -> usize {
        self.logs.len()
    }

    /// One AE step for component `i`; returns the loss before the update.
    pub fn ae_update(&mut self, i: usize, batch: &Batch<T>, ctx: StepContext) -> Result<T> {
        let obj = losses::ae_objective(&self.model, i, batch, &self.model.weights)?;
        if !obj.loss.is_finite() {
            return Err(non_finite("autoencoder loss", ctx, i));
        }
        let grads = ae_tensors(&obj.grads);
        let c = &mut self.model.components[i];
        update_step(&mut ae_tensors_mut(c), &grads, self.config.lr_ae, &mut self.optim[i].ae)?;
        Ok(obj.loss)
    }

    /// One discriminator step for component `i`. `fake` is `AE_i(X)`; `cross`
    /// lists weighted reconstructions of other components to reject as well.
    pub fn disc_update(
        &mut self,
        i: usize,
        real: &Array4<T>,
        fake: &Array4<T>,
        cross: &[(f64, &Array4<T>)],
        ctx: StepContext,
    ) -> Result<T> {
        let obj = losses::disc_objective_with_fakes(&self.model, i, real, fake, cross)?;
        if !obj.loss.is_finite() {
            return Err(non_finite("discriminator loss", ctx, i));
        }
        let grads = disc_tensors(&obj.grads);
        let state = self.optim[i]
            .disc
            .as_mut()
            .ok_or_else(|| CassError::config(format!("component {i} has no discriminator optimiser")))?;
        let d = self.model.components[i]
            .discriminator
            .as_mut()
            .expect("optimiser exists only with a discriminator");
        update_step(&mut d.tensors_mut(), &grads, self.config.lr_disc, state)?;
        Ok(obj.loss)
    }

    /// All updates for one minibatch. Returns per-component AE and
    /// discriminator losses.
    pub fn train_step(&mut self, batch: &Batch<T>, ctx: StepContext) -> Result<(Vec<T>, Vec<Option<T>>)> {
        let k = self.model.k();
        let mode = self.model.mode;
        let snapshot: Vec<Option<Array4<T>>> = if mode == Mode::CassCross {
            (0..k)
                .map(|j| match self.model.weights.cross_weight(j) {
                    Some(w) if w != 0.0 => self.model.components[j].reconstruct(&batch.mixture).map(Some),
                    _ => Ok(None),
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; k]
        };
        let mut ae = Vec::with_capacity(k);
        let mut disc = Vec::with_capacity(k);
        for i in 0..k {
            ae.push(self.ae_update(i, batch, ctx)?);
            if mode.uses_discriminators() {
                let fake = self.model.components[i].reconstruct(&batch.mixture)?;
                let cross: Vec<(f64, &Array4<T>)> = (0..k)
                    .filter(|&j| j != i)
                    .filter_map(|j| {
                        snapshot[j]
                            .as_ref()
                            .map(|s| (self.model.weights.cross_weight(j).unwrap_or(0.0), s))
                    })
                    .collect();
                disc.push(Some(self.disc_update(i, &batch.targets[i], &fake, &cross, ctx)?));
            } else {
                disc.push(None);
            }
        }
        Ok((ae, disc))
    }

    /// Training order for `epoch`; depends only on the seed and epoch index.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(self.config.seed, &[stream::SHUFFLE, epoch as u64]));
        order
    }

    pub fn run_epoch(&mut self, train: &TensorSet<T>, test: Option<&TensorSet<T>>) -> Result<EpochLog> {
        if train.is_empty() {
            return Err(CassError::arg("training split is empty"));
        }
        if train.k() != self.model.k() {
            return Err(CassError::shape(
                format!("{} component targets", self.model.k()),
                format!("{}", train.k()),
            ));
        }
        let started = Instant::now();
        let epoch = self.epochs_completed();
        let k = self.model.k();
        let order = self.epoch_order(epoch, train.len());
        let mut ae_sum = vec![0.0; k];
        let mut disc_sum = vec![0.0; k];
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            let batch = train.batch(idx);
            let (ae, disc) = self.train_step(&batch, StepContext { epoch, batch: b })?;
            let weight = idx.len() as f64;
            for i in 0..k {
                ae_sum[i] += ae[i].as_f64() * weight;
                disc_sum[i] += disc[i].map_or(0.0, |d| d.as_f64()) * weight;
            }
        }
        if !self.model.all_finite() {
            return Err(non_finite("parameters", StepContext { epoch, batch: 0 }, 0));
        }
        let last = epoch + 1 == self.config.epochs;
        let test_l2 = match test {
            Some(t) if (epoch + 1) % self.config.eval_every == 0 || last => Some(evaluate_epoch(&self.model, t)?),
            _ => None,
        };
        let n = train.len() as f64;
        let uses_disc = self.model.mode.uses_discriminators();
        let log = EpochLog {
            epoch,
            components: (0..k)
                .map(|i| ComponentLog {
                    test_l2: test_l2.as_ref().map(|v| v[i]),
                    ae_loss: ae_sum[i] / n,
                    disc_loss: uses_disc.then(|| disc_sum[i] / n),
                })
                .collect(),
            seconds: started.elapsed().as_secs_f64(),
        };
        self.logs.push(log.clone());
        Ok(log)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one.
    pub fn fit_with<F>(&mut self, train: &TensorSet<T>, test: Option<&TensorSet<T>>, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer<T>) -> Result<()>,
    {
        while self.epochs_completed() < self.config.epochs {
            self.run_epoch(train, test)?;
            on_epoch(self)?;
        }
        Ok(())
    }

    pub fn fit(&mut self, train: &TensorSet<T>, test: Option<&TensorSet<T>>) -> Result<()> {
        self.fit_with(train, test, |_| Ok(()))
    }
}

fn non_finite(what: &'static str, ctx: StepContext, component: usize) -> CassError {
    CassError::NonFinite {
        what,
        epoch: ctx.epoch,
        batch: ctx.batch,
        component,
    }
}

/// Trains `model` for `cfg.epochs` epochs and returns it with its logs.
pub fn train<T: Real>(
    model: CassModel<T>,
    train: &TensorSet<T>,
    test: Option<&TensorSet<T>>,
    cfg: TrainConfig,
) -> Result<(CassModel<T>, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(model, cfg)?;
    trainer.fit(train, test)?;
    Ok((trainer.model, trainer.logs))
}

/// Mean relative L2 error of `AE_i(X)` against `X_i` over the set, per component.
pub fn evaluate_epoch<T: Real>(model: &CassModel<T>, test: &TensorSet<T>) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(CassError::arg("test split is empty"));
    }
    let mut sums = vec![0.0; model.k()];
    for batch in test.chunks(EVAL_CHUNK) {
        for (i, c) in model.components.iter().enumerate() {
            let pred = c.reconstruct(&batch.mixture)?;
            for (p, t) in pred.outer_iter().zip(batch.targets[i].outer_iter()) {
                sums[i] += relative_error(p.iter().copied(), t.iter().copied(), Norm::L2)?;
            }
        }
    }
    let n = test.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}
