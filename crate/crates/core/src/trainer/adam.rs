use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Zip};

use crate::error::{CassError, Result};
use crate::real::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<ArrayD<T>>,
    pub v: Vec<ArrayD<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn for_params(params: &[ArrayViewD<'_, T>]) -> Self {
        let zeros: Vec<ArrayD<T>> = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// All moment tensors, `m` first.
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        self.m.iter().chain(&self.v).map(|a| a.view()).collect()
    }

    pub fn from_tensors(mut tensors: Vec<ArrayD<T>>, step: u64) -> Result<Self> {
        if tensors.len() % 2 != 0 {
            return Err(CassError::arg("optimizer state needs matching m and v tensors"));
        }
        let v = tensors.split_off(tensors.len() / 2);
        Ok(Self { m: tensors, v, step })
    }
}

/// One adaptive-moment step: `p -= lr · m̂ / (√v̂ + ε)` with bias-corrected
/// moments (decay 0.9 / 0.999, ε = 1e-8).
pub fn update_step<T: Real>(
    params: &mut [ArrayViewMutD<'_, T>],
    grads: &[ArrayViewD<'_, T>],
    lr: f64,
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(CassError::arg(format!(
            "optimizer got {} parameter tensors, {} gradients and {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(CassError::arg(format!(
                "gradient shape {:?} does not match parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let (c1, c2) = (T::one() - b1, T::one() - b2);
    let step_size = T::lit(lr / (1.0 - BETA1.powi(t)));
    let v_correction = T::lit(1.0 / (1.0 - BETA2.powi(t)));
    let eps = T::lit(EPSILON);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p -= step_size * *m / ((*v * v_correction).sqrt() + eps);
        });
    }
    Ok(())
}
