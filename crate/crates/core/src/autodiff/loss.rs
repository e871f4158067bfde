use crate::error::{invalid, shape, Result};
use crate::prelude::*;

use super::Real;

/// Mean squared error and its gradient `2(pred − target)/n`.
pub fn mse_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(shape(format!("mse: {} predictions vs {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(invalid("mse of an empty batch"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            loss += d * d;
            T::lit(2.0 * d / n)
        })
        .collect();
    Ok((T::lit(loss / n), grad))
}
