//! Reconstruction and adversarial objectives with analytic gradients.
//!
//! Every objective returns its scalar value together with a gradient
//! accumulator shaped like the component it trains. Only the parameters the
//! step is allowed to move receive gradient; everything else stays exactly
//! zero, which is how the AE/discriminator isolation is enforced.

use std::collections::BTreeMap;

use ndarray::{Array1, Array4, ArrayView1, Zip};

use crate::error::{CassError, Result};
use crate::kv::KvDoc;
use crate::model::{CassModel, ComponentModel, Mode};
use crate::nn::Params;
use crate::real::Real;

/// Weights of the combined objectives.
///
/// `alpha` scales reconstruction and `beta` the adversarial term of the AE
/// objective; they must sum to one. `cross_weights[j]` scales the term in
/// which every other discriminator is trained to reject `AE_j` outputs; it is
/// not part of the `alpha + beta` normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub cross_weights: BTreeMap<usize, f64>,
}

impl LossWeights {
    pub const ALPHA: f64 = 0.9;
    pub const BETA: f64 = 0.1;
    pub const CROSS: f64 = 0.01;

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            cross_weights: BTreeMap::new(),
        }
    }

    /// `alpha = 0.9`, `beta = 0.1`, every cross weight `0.01`.
    pub fn defaults(k: usize) -> Self {
        Self::new(Self::ALPHA, Self::BETA).with_uniform_cross(k, Self::CROSS)
    }

    pub fn with_uniform_cross(mut self, k: usize, weight: f64) -> Self {
        self.cross_weights = (0..k).map(|j| (j, weight)).collect();
        self
    }

    pub fn cross_weight(&self, j: usize) -> Option<f64> {
        self.cross_weights.get(&j).copied()
    }

    pub fn validate(&self, k: usize, mode: Mode) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CassError::config(format!("loss {name} = {v} must lie in [0, 1]")));
            }
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(CassError::config(format!(
                "loss alpha + beta must equal 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        for (&j, &w) in &self.cross_weights {
            if j >= k {
                return Err(CassError::config(format!("cross weight for component {j} but K = {k}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CassError::config(format!("cross weight for component {j} must be ≥ 0, got {w}")));
            }
        }
        if mode == Mode::CassCross {
            self.check_cross_complete(k)?;
        }
        Ok(())
    }

    fn check_cross_complete(&self, k: usize) -> Result<()> {
        match (0..k).find(|j| !self.cross_weights.contains_key(j)) {
            Some(j) => Err(CassError::config(format!("missing cross weight for component {j}"))),
            None => Ok(()),
        }
    }

    /// Writes `<prefix>.alpha`, `<prefix>.beta` and `<prefix>.cross.<j>`.
    pub fn write_kv(&self, doc: &mut KvDoc, prefix: &str) {
        doc.set(format!("{prefix}.alpha"), self.alpha);
        doc.set(format!("{prefix}.beta"), self.beta);
        for (j, w) in &self.cross_weights {
            doc.set(format!("{prefix}.cross.{j}"), w);
        }
    }

    /// Inverse of [`write_kv`](Self::write_kv). A `<prefix>.cross_weight`
    /// key (default [`CROSS`](Self::CROSS)) sets every cross weight;
    /// `<prefix>.cross.<j>` keys override it.
    pub fn read_kv(doc: &KvDoc, prefix: &str, k: usize) -> Result<Self> {
        let uniform = doc.parse_or(&format!("{prefix}.cross_weight"), Self::CROSS)?;
        let mut w = Self::new(
            doc.parse_or(&format!("{prefix}.alpha"), Self::ALPHA)?,
            doc.parse_or(&format!("{prefix}.beta"), Self::BETA)?,
        )
        .with_uniform_cross(k, uniform);
        let cross_prefix = format!("{prefix}.cross.");
        for (key, _) in doc.iter() {
            if let Some(rest) = key.strip_prefix(&cross_prefix) {
                let j: usize = rest
                    .parse()
                    .map_err(|_| CassError::config(format!("`{key}`: expected a component index after `{cross_prefix}`")))?;
                w.cross_weights.insert(j, doc.parse_required(key)?);
            }
        }
        Ok(w)
    }
}

/// Target label of a binary cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Fake,
    Real,
}

/// Mixture spectrograms and the `K` matching component targets,
/// each `[batch, 1, H, W]`.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub mixture: Array4<T>,
    pub targets: Vec<Array4<T>>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.mixture.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn target(&self, i: usize) -> Result<&Array4<T>> {
        self.targets
            .get(i)
            .ok_or_else(|| CassError::arg(format!("batch has no target for component {i}")))
    }
}

/// Loss value plus gradients. `grads` has the structure of the trained
/// component; entries outside the trained networks are zero.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub loss: T,
    pub grads: ComponentModel<T>,
}

fn check_same_shape<T>(a: &Array4<T>, b: &Array4<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(CassError::shape(format!("{:?}", b.shape()), format!("{:?}", a.shape())));
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse_loss<T: Real>(pred: &Array4<T>, target: &Array4<T>) -> Result<T> {
    check_same_shape(pred, target)?;
    Ok(mse_unchecked(pred, target))
}

fn mse_unchecked<T: Real>(pred: &Array4<T>, target: &Array4<T>) -> T {
    let n = T::lit(pred.len() as f64);
    Zip::from(pred).and(target).fold(T::zero(), |acc, &p, &t| acc + (p - t) * (p - t)) / n
}

fn mse_grad<T: Real>(pred: &Array4<T>, target: &Array4<T>, scale: T) -> Array4<T> {
    let c = scale * T::lit(2.0 / pred.len() as f64);
    Zip::from(pred).and(target).map_collect(|&p, &t| c * (p - t))
}

/// Mean binary cross-entropy of probabilities against a fixed label.
pub fn bce_loss<T: Real>(probs: ArrayView1<T>, label: Label) -> T {
    let n = T::lit(probs.len() as f64);
    let sum = match label {
        Label::Real => probs.iter().fold(T::zero(), |a, &p| a - p.ln()),
        Label::Fake => probs.iter().fold(T::zero(), |a, &p| a - (T::one() - p).ln()),
    };
    sum / n
}

fn bce_grad<T: Real>(probs: &Array1<T>, label: Label, scale: T) -> Array1<T> {
    let c = scale / T::lit(probs.len() as f64);
    match label {
        Label::Real => probs.mapv(|p| -c / p),
        Label::Fake => probs.mapv(|p| c / (T::one() - p)),
    }
}

/// Reconstruction objective for component `i`'s auto-encoder:
/// `alpha·MSE(AE_i(X), X_i) + beta·BCE(D_i(AE_i(X)), real)`.
///
/// In baseline mode the objective is the plain MSE. The adversarial term is
/// also dropped when `beta = 0`. The discriminator is used but frozen.
pub fn ae_objective<T: Real>(model: &CassModel<T>, i: usize, batch: &Batch<T>, w: &LossWeights) -> Result<Objective<T>> {
    let c = model.component(i)?;
    let target = batch.target(i)?;
    c.spec.check_input(&batch.mixture)?;
    let (z, enc_cache) = c.encoder.forward(&batch.mixture);
    let (pred, dec_cache) = c.decoder.forward(&z);
    check_same_shape(&pred, target)?;

    let adversarial = model.mode.uses_discriminators() && w.beta != 0.0;
    let alpha = if model.mode.uses_discriminators() { T::lit(w.alpha) } else { T::one() };
    let mut loss = alpha * mse_unchecked(&pred, target);
    let mut dpred = mse_grad(&pred, target, alpha);
    if adversarial {
        let d = c
            .discriminator
            .as_ref()
            .ok_or_else(|| CassError::config(format!("component {i} has no discriminator")))?;
        let beta = T::lit(w.beta);
        let (probs, d_cache) = d.forward(&pred);
        loss += beta * bce_loss(probs.view(), Label::Real);
        let dp = bce_grad(&probs, Label::Real, beta);
        dpred += &d.backward(&d_cache, &dp, None, true).expect("requested");
    }

    let mut grads = c.zeros_like();
    let dz = c
        .decoder
        .backward(&dec_cache, &dpred, Some(&mut grads.decoder), true)
        .expect("requested");
    c.encoder.backward(&enc_cache, &dz, Some(&mut grads.encoder), false);
    Ok(Objective { loss, grads })
}

/// Discriminator objective for component `i`:
/// `BCE(D_i(AE_i(X)), fake) + BCE(D_i(X_i), real)`. The auto-encoder output
/// is treated as a constant.
pub fn disc_objective<T: Real>(model: &CassModel<T>, i: usize, batch: &Batch<T>) -> Result<Objective<T>> {
    let fake = model.component(i)?.reconstruct(&batch.mixture)?;
    disc_objective_with_fakes(model, i, batch.target(i)?, &fake, &[])
}

/// [`disc_objective`] plus `Σ_{j≠i} α_j · BCE(D_i(AE_j(X)), fake)`.
///
/// Terms with `α_j = 0` are skipped entirely, so all-zero cross weights give
/// a result bitwise equal to [`disc_objective`].
pub fn disc_objective_cross<T: Real>(model: &CassModel<T>, i: usize, batch: &Batch<T>, w: &LossWeights) -> Result<Objective<T>> {
    model.component(i)?;
    w.check_cross_complete(model.k())?;
    let fake = model.components[i].reconstruct(&batch.mixture)?;
    let mut cross = Vec::new();
    for j in (0..model.k()).filter(|&j| j != i) {
        let weight = w.cross_weights[&j];
        if weight != 0.0 {
            cross.push((weight, model.components[j].reconstruct(&batch.mixture)?));
        }
    }
    let cross: Vec<(f64, &Array4<T>)> = cross.iter().map(|(wt, f)| (*wt, f)).collect();
    disc_objective_with_fakes(model, i, batch.target(i)?, &fake, &cross)
}

/// Discriminator objective on precomputed inputs: `real` are true component
/// spectrograms, `fake` is `AE_i(X)`, and `cross` lists weighted `AE_j(X)`
/// outputs to be rejected as well. Zero-weight cross entries are skipped.
pub fn disc_objective_with_fakes<T: Real>(
    model: &CassModel<T>,
    i: usize,
    real: &Array4<T>,
    fake: &Array4<T>,
    cross: &[(f64, &Array4<T>)],
) -> Result<Objective<T>> {
    if !model.mode.uses_discriminators() {
        return Err(CassError::config("discriminator objectives are undefined in baseline mode"));
    }
    let c = model.component(i)?;
    c.spec.check_input(real)?;
    c.spec.check_input(fake)?;
    let d = c
        .discriminator
        .as_ref()
        .ok_or_else(|| CassError::config(format!("component {i} has no discriminator")))?;
    let mut grads = c.zeros_like();
    let g = grads.discriminator.as_mut().expect("same structure as component");

    let (p_fake, fake_cache) = d.forward(fake);
    let (p_real, real_cache) = d.forward(real);
    let mut loss = bce_loss(p_fake.view(), Label::Fake) + bce_loss(p_real.view(), Label::Real);
    d.backward(&fake_cache, &bce_grad(&p_fake, Label::Fake, T::one()), Some(g), false);
    d.backward(&real_cache, &bce_grad(&p_real, Label::Real, T::one()), Some(g), false);
    for &(weight, x) in cross {
        if weight == 0.0 {
            continue;
        }
        c.spec.check_input(x)?;
        let wt = T::lit(weight);
        let (p, cache) = d.forward(x);
        loss += wt * bce_loss(p.view(), Label::Fake);
        d.backward(&cache, &bce_grad(&p, Label::Fake, wt), Some(g), false);
    }
    Ok(Objective { loss, grads })
}

/// The abstract two-player value as written: returns
/// `(E[log D(x)], E[1 − log D(G(z))])` over the given discriminator outputs.
/// Training uses the cross-entropy forms above; this exists as a reference
/// for direction-of-optimization checks.
pub fn gan_minmax_reference<T: Real>(real_probs: ArrayView1<T>, fake_probs: ArrayView1<T>) -> (T, T) {
    let mean = |v: ArrayView1<T>, f: &dyn Fn(T) -> T| v.iter().fold(T::zero(), |a, &p| a + f(p)) / T::lit(v.len() as f64);
    (
        mean(real_probs, &|p| p.ln()),
        mean(fake_probs, &|p| T::one() - p.ln()),
    )
}
