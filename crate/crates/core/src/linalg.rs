//! Householder least squares on column-stored designs.

use crate::prelude::*;

/// Relative size below which a column's residual norm counts as zero.
const RANK_TOL: f64 = 1e-10;

pub(crate) struct LeastSquares {
    pub beta: Vec<f64>,
    /// Diagonal of `(XᵀX)⁻¹`.
    pub xtx_inv_diag: Vec<f64>,
}

/// Minimizes `‖Xβ − y‖` for `X` given as columns. Fails with the index of the
/// first column that is (numerically) a combination of earlier ones.
pub(crate) fn lstsq(columns: &[Vec<f64>], y: &[f64]) -> core::result::Result<LeastSquares, usize> {
    let p = columns.len();
    let n = y.len();
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut diag = vec![0.0; p];
    for j in 0..p {
        if j >= n {
            return Err(j);
        }
        let alpha = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(alpha > RANK_TOL * norms[j].max(f64::MIN_POSITIVE)) {
            return Err(j);
        }
        let r = if a[j][j] > 0.0 { -alpha } else { alpha };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= r;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = r;
        let reflect = |col: &mut [f64]| {
            let s = 2.0 * v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            col.iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
        };
        for col in a.iter_mut().skip(j + 1) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
        a[j][j] = r;
        a[j][j + 1..].iter_mut().for_each(|x| *x = 0.0);
    }
    // R is upper triangular with R[i][j] = a[j][i]; back substitution.
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| a[k][i] * beta[k]).sum();
        beta[i] = (qty[i] - s) / diag[i];
    }
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, so its diagonal holds the squared row norms of R⁻¹.
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / diag[j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| a[k][i] * rinv[k][j]).sum();
            rinv[i][j] = -s / diag[i];
        }
    }
    let xtx_inv_diag = rinv.iter().map(|row| row.iter().map(|v| v * v).sum()).collect();
    Ok(LeastSquares { beta, xtx_inv_diag })
}
