use ndarray::{Array4, Axis};

use crate::error::{CassError, Result};
use crate::losses::Batch;
use crate::real::Real;
use crate::spectro::Prepared;

/// Stacked model inputs: `[N, 1, H, W]` mixtures and one target tensor per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet<T> {
    pub mixtures: Array4<T>,
    pub targets: Vec<Array4<T>>,
}

impl<T: Real> TensorSet<T> {
    pub fn from_prepared(records: &[Prepared]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| CassError::arg("cannot build a tensor set from zero records"))?;
        let (h, w) = first.mixture.dim();
        let k = first.components.len();
        let n = records.len();
        let mut mixtures = Array4::<T>::zeros((n, 1, h, w));
        let mut targets = vec![Array4::<T>::zeros((n, 1, h, w)); k];
        for (r, rec) in records.iter().enumerate() {
            if rec.mixture.dim() != (h, w) || rec.components.len() != k {
                return Err(CassError::shape(
                    format!("{k} components of {h}x{w}"),
                    format!("record {r}: {} components of {:?}", rec.components.len(), rec.mixture.dim()),
                ));
            }
            mixtures
                .index_axis_mut(Axis(0), r)
                .index_axis_mut(Axis(0), 0)
                .zip_mut_with(&rec.mixture, |d, &s| *d = T::lit(s));
            for (t, c) in targets.iter_mut().zip(&rec.components) {
                t.index_axis_mut(Axis(0), r)
                    .index_axis_mut(Axis(0), 0)
                    .zip_mut_with(c, |d, &s| *d = T::lit(s));
            }
        }
        Ok(Self { mixtures, targets })
    }

    pub fn len(&self) -> usize {
        self.mixtures.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    pub fn input_shape(&self) -> (usize, usize) {
        let (_, _, h, w) = self.mixtures.dim();
        (h, w)
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<T> {
        Batch {
            mixture: self.mixtures.select(Axis(0), indices),
            targets: self.targets.iter().map(|t| t.select(Axis(0), indices)).collect(),
        }
    }

    /// Consecutive batches of at most `size` items, in index order.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Batch<T>> + '_ {
        let n = self.len();
        (0..n).step_by(size.max(1)).map(move |start| {
            let idx: Vec<usize> = (start..(start + size).min(n)).collect();
            self.batch(&idx)
        })
    }
}
