//! Models, datasets and hand-derived per-example gradients.

mod data;
mod model;
mod partition;

pub use data::{gen_logistic_planted, gen_synthetic, load_csv, read_csv, Example, Label, LocalDataset, SyntheticTask};
pub use model::{
    accuracy, dataset_loss, init_model, per_example_gradient, per_example_loss, ModelSpec, QuadraticOracle,
};
pub use partition::partition_noniid;

use crate::error::{Error, Result};
use std::ops::Deref;

/// Flat parameter (or gradient) vector. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter entry {i} is {}", values[i])));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Wraps values produced by arithmetic on finite inputs. Callers that can
    /// overflow must use [`ParamVector::new`] instead.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ParamVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// `self - other`, checked for dimension.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dim(self.len(), other.len(), "vector difference")?;
        ParamVector::new(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    // scaled accumulation keeps huge but finite entries from overflowing
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_entries() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn norm_of_large_entries_does_not_overflow() {
        let v = ParamVector::new(vec![3e200, 4e200]).unwrap();
        assert!((v.norm() / 5e200 - 1.0).abs() < 1e-12);
        assert_eq!(ParamVector::zeros(3).norm(), 0.0);
    }
}
