use crate::error::{invalid, Error, Result};
use crate::prelude::*;

/// Test-set score of one trained model.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalResult {
    pub r2: f64,
    pub rmse: f64,
    pub n_test: usize,
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(invalid("metrics need at least one observation"));
    }
    if y.len() != y_hat.len() {
        return Err(invalid(format!("{} targets vs {} estimates", y.len(), y_hat.len())));
    }
    Ok(())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let ss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

pub fn evaluate(y: &[f64], y_hat: &[f64]) -> Result<EvalResult> {
    Ok(EvalResult { r2: r2(y, y_hat)?, rmse: rmse(y, y_hat)?, n_test: y.len() })
}
