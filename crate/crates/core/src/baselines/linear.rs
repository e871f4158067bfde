use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::prelude::*;
use crate::special::student_t_two_sided;

use super::{best_per_category, check_xy, univariate_scores, Table};

/// Minimum adjusted-R² gain for a forward step.
pub const STEP_MIN_GAIN: f64 = 0.01;
/// Selected variables must have p-values at or below this.
pub const P_VALUE_LIMIT: f64 = 0.1;
/// Selected variables must have variance inflation factors at or below this.
pub const VIF_LIMIT: f64 = 3.0;

/// Ordinary least squares with an intercept.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    /// `1 − (1 − R²)(n − 1)/(n − p − 1)`.
    pub adj_r2: f64,
    pub n: usize,
    pub p: usize,
}

impl OlsFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Predictions for a table holding (at least) the fitted columns.
    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        let t = table.select_names(&self.names)?;
        Ok((0..table.n_rows()).map(|i| self.predict_row(&t.row(i))).collect())
    }
}

pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> f64 {
    1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0)
}

pub fn ols_fit(table: &Table, y: &[f64]) -> Result<OlsFit> {
    check_xy(table, y)?;
    let (n, p) = (y.len(), table.n_cols());
    if n < p + 2 {
        return Err(crate::error::invalid(format!("{n} observations cannot support {p} predictors")));
    }
    let mut design = Vec::with_capacity(p + 1);
    design.push(vec![1.0; n]);
    design.extend(table.columns.iter().cloned());
    let fit = lstsq(&design, y).map_err(|j| Error::SingularDesign {
        column: if j == 0 { "intercept".to_string() } else { table.names[j - 1].clone() },
    })?;
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let ss_res: f64 = (0..n)
        .map(|i| {
            let pred = fit.beta[0] + (0..p).map(|j| fit.beta[j + 1] * table.columns[j][i]).sum::<f64>();
            (y[i] - pred).powi(2)
        })
        .sum();
    let df = (n - p - 1) as f64;
    let sigma2 = ss_res / df;
    let r2 = 1.0 - ss_res / ss_tot;
    let std_errors: Vec<f64> = (1..=p).map(|j| (sigma2 * fit.xtx_inv_diag[j]).sqrt()).collect();
    let t_stats: Vec<f64> = (0..p)
        .map(|j| if std_errors[j] > 0.0 { fit.beta[j + 1] / std_errors[j] } else { f64::INFINITY })
        .collect();
    let p_values = t_stats.iter().map(|&t| student_t_two_sided(t, df)).collect();
    Ok(OlsFit {
        names: table.names.clone(),
        coefficients: fit.beta[1..].to_vec(),
        intercept: fit.beta[0],
        std_errors,
        t_stats,
        p_values,
        r2,
        adj_r2: adjusted_r2(r2, n, p),
        n,
        p,
    })
}

/// Variance inflation factor of each column against the others
/// (`+inf` for an exact linear dependence).
pub fn vif(table: &Table) -> Vec<f64> {
    let p = table.n_cols();
    (0..p)
        .map(|j| {
            if p < 2 {
                return 1.0;
            }
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            match ols_fit(&table.select(&others), &table.columns[j]) {
                Ok(f) if f.r2 < 1.0 => 1.0 / (1.0 - f.r2),
                // Exact dependence, or a constant column the intercept explains.
                _ => f64::INFINITY,
            }
        })
        .collect()
}

/// Result of stepwise selection: the final fit plus the selection trail.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepwiseModel {
    pub fit: OlsFit,
    pub selected: Vec<String>,
    pub vifs: Vec<f64>,
    /// No variable survived; `fit` is intercept-only.
    pub degenerate: bool,
    /// Variables in the order the forward stage added them.
    pub forward_order: Vec<String>,
    pub removed_by_p_value: Vec<String>,
    pub removed_by_vif: Vec<String>,
}

impl StepwiseModel {
    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        self.fit.predict(table)
    }
}

fn fit_named(table: &Table, y: &[f64], names: &[String]) -> Result<OlsFit> {
    ols_fit(&table.select_names(names)?, y)
}

/// Supervised stepwise selection: rank by univariate adjusted R², keep the
/// best radius per category, add greedily while adjusted R² rises by at
/// least [`STEP_MIN_GAIN`], then prune p-values above [`P_VALUE_LIMIT`]
/// and the largest VIF above [`VIF_LIMIT`] until neither rule fires.
pub fn stepwise_linear(table: &Table, y: &[f64]) -> Result<StepwiseModel> {
    check_xy(table, y)?;
    if table.n_cols() < 2 {
        return Err(crate::error::invalid("stepwise selection needs at least two candidate variables"));
    }
    let keep = best_per_category(table, y);
    let scores = univariate_scores(table, y);
    let mut candidates: Vec<usize> = keep;
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut selected: Vec<String> = Vec::new();
    let mut current = 0.0;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for &j in &candidates {
            let name = &table.names[j];
            if selected.contains(name) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(name.clone());
            if let Ok(f) = fit_named(table, y, &trial) {
                if best.is_none_or(|(_, s)| f.adj_r2 > s) {
                    best = Some((j, f.adj_r2));
                }
            }
        }
        match best {
            Some((j, s)) if s - current >= STEP_MIN_GAIN => {
                selected.push(table.names[j].clone());
                current = s;
            }
            _ => break,
        }
    }
    let forward_order = selected.clone();

    let mut removed_by_p_value = Vec::new();
    let mut removed_by_vif = Vec::new();
    while !selected.is_empty() {
        let fit = fit_named(table, y, &selected)?;
        let high_p: Vec<String> = selected
            .iter()
            .zip(&fit.p_values)
            .filter(|(_, p)| !(**p <= P_VALUE_LIMIT))
            .map(|(n, _)| n.clone())
            .collect();
        if !high_p.is_empty() {
            selected.retain(|n| !high_p.contains(n));
            removed_by_p_value.extend(high_p);
            continue;
        }
        let v = vif(&table.select_names(&selected)?);
        let (worst, &worst_v) = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        if worst_v > VIF_LIMIT {
            removed_by_vif.push(selected.remove(worst));
            continue;
        }
        break;
    }

    let degenerate = selected.is_empty();
    let fit = if degenerate { intercept_only(y)? } else { fit_named(table, y, &selected)? };
    let vifs = if degenerate { Vec::new() } else { vif(&table.select_names(&selected)?) };
    Ok(StepwiseModel { fit, selected, vifs, degenerate, forward_order, removed_by_p_value, removed_by_vif })
}

fn intercept_only(y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    Ok(OlsFit {
        names: Vec::new(),
        coefficients: Vec::new(),
        intercept: mean,
        std_errors: Vec::new(),
        t_stats: Vec::new(),
        p_values: Vec::new(),
        r2: 0.0,
        adj_r2: 0.0,
        n,
        p: 0,
    })
}
