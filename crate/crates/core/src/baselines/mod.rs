//! The comparison models and their building procedures: the mean
//! predictor, stepwise-selected linear regression, a random forest with
//! importance-driven variable elimination and stochastic hyperparameter
//! search, and a multi-layer perceptron with random architecture search.

mod forest;
mod linear;
mod mean;
mod mlp;

pub use forest::{
    cart_regressor, rf_build, rf_fit, Forest, RfBuild, RfBuildConfig, RfSpec, Tree, TreeNode, TreeParams,
};
pub use linear::{ols_fit, stepwise_linear, vif, OlsFit, StepwiseModel, P_VALUE_LIMIT, STEP_MIN_GAIN, VIF_LIMIT};
pub use mean::MeanModel;
pub use mlp::{mlp_build, MlpBuild, MlpBuildConfig, MlpModel, MlpSpec};

use crate::error::{invalid, Result};
use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::prelude::*;
use crate::rng::Rng;
use rand::seq::SliceRandom;

/// Named predictor columns of equal length.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(invalid(format!("{} names for {} columns", names.len(), columns.len())));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(invalid("columns differ in length"));
            }
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("table contains non-finite values"));
        }
        Ok(Self { names, columns })
    }

    pub fn from_features(rows: &[FeatureVector]) -> Self {
        let columns = (0..FEATURE_NAMES.len()).map(|j| rows.iter().map(|r| r.values[j]).collect()).collect();
        Self { names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), columns }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
        }
    }

    pub fn select_names(&self, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| invalid(format!("unknown column `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select(&cols))
    }

    pub fn rows_subset(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }
}

/// Category of a buffered variable: the name without a trailing
/// `_<radius>`. Unbuffered variables are their own category.
pub fn category(name: &str) -> &str {
    match name.rsplit_once('_') {
        Some((stem, suffix)) if !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) => stem,
        _ => name,
    }
}

/// Adjusted R² of a univariate regression of `y` on each column
/// (`-inf` where the fit is impossible).
pub fn univariate_scores(table: &Table, y: &[f64]) -> Vec<f64> {
    table
        .columns
        .iter()
        .zip(&table.names)
        .map(|(c, n)| {
            let t = Table { names: vec![n.clone()], columns: vec![c.clone()] };
            ols_fit(&t, y).map_or(f64::NEG_INFINITY, |f| f.adj_r2)
        })
        .collect()
}

/// Indices of the best-scoring column of each category, in table order.
pub fn best_per_category(table: &Table, y: &[f64]) -> Vec<usize> {
    let scores = univariate_scores(table, y);
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..table.n_cols() {
        let cat = category(&table.names[j]);
        match keep.iter().position(|&k| category(&table.names[k]) == cat) {
            Some(pos) if scores[j] > scores[keep[pos]] => keep[pos] = j,
            Some(_) => {}
            None => keep.push(j),
        }
    }
    keep.sort_unstable();
    keep
}

/// Shuffled `k`-fold partition of `0..n`; fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Mean held-out R² across folds for a fit-and-predict routine.
pub(crate) fn cross_validate(
    table: &Table,
    y: &[f64],
    folds: &[Vec<usize>],
    mut fit_predict: impl FnMut(&Table, &[f64], &Table) -> Result<Vec<f64>>,
) -> Result<f64> {
    let n = table.n_rows();
    let mut total = 0.0;
    let mut counted = 0;
    for fold in folds {
        if fold.is_empty() {
            continue;
        }
        let mut held = vec![false; n];
        fold.iter().for_each(|&i| held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let yte: Vec<f64> = fold.iter().map(|&i| y[i]).collect();
        let pred = fit_predict(&table.rows_subset(&train), &ytr, &table.rows_subset(fold))?;
        let score = crate::evalstat::r2(&yte, &pred).unwrap_or(f64::NEG_INFINITY);
        total += score;
        counted += 1;
    }
    if counted == 0 {
        return Err(invalid("cross-validation needs at least one non-empty fold"));
    }
    Ok(total / counted as f64)
}

fn check_xy(table: &Table, y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if table.n_cols() > 0 && table.n_rows() != y.len() {
        return Err(invalid(format!("{} rows vs {} targets", table.n_rows(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    Ok(())
}
