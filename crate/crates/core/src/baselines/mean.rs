use crate::error::{invalid, Result};
use crate::prelude::*;

/// Predicts the training mean everywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanModel {
    pub mean: f64,
}

impl MeanModel {
    pub fn fit(targets: &[f64]) -> Result<Self> {
        if targets.is_empty() {
            return Err(invalid("mean model needs at least one target"));
        }
        Ok(Self { mean: targets.iter().sum::<f64>() / targets.len() as f64 })
    }

    pub fn predict(&self) -> f64 {
        self.mean
    }

    pub fn predict_many(&self, n: usize) -> Vec<f64> {
        vec![self.mean; n]
    }
}
