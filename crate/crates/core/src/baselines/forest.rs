use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::prelude::*;
use crate::rng::{derive, derived, seeded, Rng};

use super::{best_per_category, check_xy, cross_validate, kfold, Table};

/// Growth limits of one regression tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeParams {
    /// Features examined per split, drawn without replacement.
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TreeNode {
    Leaf { value: f64, samples: usize },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART regression tree with variance-reduction splits.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    /// Total decrease in squared error attributed to each feature.
    pub impurity_decrease: Vec<f64>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], k: usize) -> usize {
            match nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    left_len: usize,
    gain: f64,
}

/// Best split of `samples` on `feature`: maximizes `S_l²/n_l + S_r²/n_r`,
/// which minimizes the children's summed squared error.
fn scan_feature(
    x: &[f64],
    y: &[f64],
    samples: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(f64, f64)>,
) -> Option<BestSplit> {
    buf.clear();
    buf.extend(samples.iter().map(|&i| (x[i], y[i])));
    buf.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = buf.len();
    let total: f64 = buf.iter().map(|p| p.1).sum();
    let parent = total * total / n as f64;
    let mut left = 0.0;
    let mut best: Option<BestSplit> = None;
    for k in 1..n {
        left += buf[k - 1].1;
        if k < min_leaf || n - k < min_leaf || buf[k - 1].0 >= buf[k].0 {
            continue;
        }
        let right = total - left;
        let score = left * left / k as f64 + right * right / (n - k) as f64;
        let gain = score - parent;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            let (a, b) = (buf[k - 1].0, buf[k].0);
            let mid = a + (b - a) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best = Some(BestSplit { feature, threshold, left_len: k, gain });
        }
    }
    best
}

/// Fits a tree to the rows listed in `samples` (repeats allowed).
pub(crate) fn fit_tree(columns: &[Vec<f64>], y: &[f64], samples: Vec<usize>, params: &TreeParams, rng: &mut Rng) -> Tree {
    let p = columns.len();
    let mut nodes = Vec::new();
    let mut impurity_decrease = vec![0.0; p];
    let mut features: Vec<usize> = (0..p).collect();
    let mut buf = Vec::new();
    // (node index, samples, depth)
    let mut stack = vec![(0usize, samples, 0usize)];
    nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
    while let Some((k, idx, depth)) = stack.pop() {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| y[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        nodes[k] = TreeNode::Leaf { value: mean, samples: n };
        let can_split = n >= params.min_samples_split
            && n >= 2 * params.min_samples_leaf
            && params.max_depth.is_none_or(|d| depth < d)
            && sse > 1e-12 * (1.0 + mean * mean) * n as f64;
        if !can_split {
            continue;
        }
        features.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        for &f in &features[..params.max_features.clamp(1, p)] {
            if let Some(s) = scan_feature(&columns[f], y, &idx, f, params.min_samples_leaf, &mut buf) {
                if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                    best = Some(s);
                }
            }
        }
        let Some(best) = best else { continue };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| columns[best.feature][i] <= best.threshold);
        debug_assert_eq!(left_idx.len(), best.left_len);
        impurity_decrease[best.feature] += best.gain.max(0.0);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        nodes[k] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left: l, right: r };
        stack.push((r, right_idx, depth + 1));
        stack.push((l, left_idx, depth + 1));
    }
    Tree { nodes, impurity_decrease }
}

/// A single CART tree on all rows (no bootstrap).
pub fn cart_regressor(table: &Table, y: &[f64], params: &TreeParams, seed: u64) -> Result<Tree> {
    check_xy(table, y)?;
    if table.n_cols() == 0 {
        return Err(invalid("tree needs at least one feature"));
    }
    check_params(params.min_samples_leaf, params.min_samples_split)?;
    Ok(fit_tree(&table.columns, y, (0..y.len()).collect(), params, &mut seeded(seed)))
}

fn check_params(leaf: usize, split: usize) -> Result<()> {
    if leaf == 0 || split < 2 {
        return Err(invalid("min_samples_leaf must be ≥ 1 and min_samples_split ≥ 2"));
    }
    Ok(())
}

/// Random-forest hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RfSpec {
    pub n_trees: usize,
    /// Fraction of features examined per split, rounded up.
    pub max_features_fraction: f64,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for RfSpec {
    /// 500 trees, half the features per split, otherwise library defaults.
    fn default() -> Self {
        Self { n_trees: 500, max_features_fraction: 0.5, min_samples_leaf: 1, min_samples_split: 2, bootstrap: true }
    }
}

impl RfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=1000).contains(&self.n_trees)
            || !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0)
            || !(1..=100).contains(&self.min_samples_leaf)
            || !(2..=20).contains(&self.min_samples_split)
        {
            return Err(invalid(format!("random-forest spec outside the search space: {self:?}")));
        }
        Ok(())
    }

    /// Uniform draw from the search space.
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            n_trees: rng.random_range(1..=1000),
            max_features_fraction: 1.0 - rng.random::<f64>(),
            min_samples_leaf: rng.random_range(1..=100),
            min_samples_split: rng.random_range(2..=20),
            bootstrap: rng.random_bool(0.5),
        }
    }

    pub fn max_features(&self, p: usize) -> usize {
        (libm::ceil(self.max_features_fraction * p as f64) as usize).clamp(1, p.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Forest {
    pub spec: RfSpec,
    pub names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Per tree, how often each training row was drawn; `None` without
    /// bootstrap.
    pub in_bag: Option<Vec<Vec<u32>>>,
    /// Out-of-bag estimate per training row (`None` where every tree saw it).
    pub oob_predictions: Option<Vec<Option<f64>>>,
    /// Mean decrease in squared error per feature, normalized to sum 1.
    pub importances: Vec<f64>,
    oob_r2: Option<f64>,
}

impl Forest {
    /// Mean of the tree predictions.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Predictions for a table holding (at least) the fitted columns.
    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        let t = table.select_names(&self.names)?;
        Ok((0..t.n_rows()).map(|i| self.predict_row(&t.row(i))).collect())
    }

    pub fn oob_r2(&self) -> Result<f64> {
        if !self.spec.bootstrap {
            return Err(Error::UnavailableStatistic("out-of-bag R² needs bootstrap sampling".into()));
        }
        self.oob_r2.ok_or_else(|| Error::UnavailableStatistic("no row was left out of every bag".into()))
    }
}

/// Fits a forest; with bootstrap on, also records in-bag counts and the
/// out-of-bag R² over rows with at least one out-of-bag tree.
pub fn rf_fit(table: &Table, y: &[f64], spec: &RfSpec, seed: u64) -> Result<Forest> {
    check_xy(table, y)?;
    spec.validate()?;
    if table.n_cols() == 0 {
        return Err(invalid("forest needs at least one feature"));
    }
    let n = y.len();
    let p = table.n_cols();
    let params = TreeParams {
        max_features: spec.max_features(p),
        min_samples_leaf: spec.min_samples_leaf,
        min_samples_split: spec.min_samples_split,
        max_depth: None,
    };
    let mut trees = Vec::with_capacity(spec.n_trees);
    let mut in_bag = spec.bootstrap.then(Vec::new);
    for t in 0..spec.n_trees {
        let mut rng = derived(seed, t as u64);
        let samples: Vec<usize> = if spec.bootstrap {
            let s: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut counts = vec![0u32; n];
            s.iter().for_each(|&i| counts[i] += 1);
            in_bag.as_mut().expect("bootstrap").push(counts);
            s
        } else {
            (0..n).collect()
        };
        trees.push(fit_tree(&table.columns, y, samples, &params, &mut rng));
    }

    let mut importances = vec![0.0; p];
    for tree in &trees {
        let total: f64 = tree.impurity_decrease.iter().sum();
        if total > 0.0 {
            importances.iter_mut().zip(&tree.impurity_decrease).for_each(|(a, d)| *a += d / total);
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|a| *a /= total);
    }

    let (oob_predictions, oob_r2) = match &in_bag {
        Some(bags) => {
            let preds: Vec<Option<f64>> = (0..n)
                .map(|i| {
                    let row = table.row(i);
                    let outs: Vec<f64> =
                        trees.iter().zip(bags).filter(|(_, b)| b[i] == 0).map(|(t, _)| t.predict_row(&row)).collect();
                    (!outs.is_empty()).then(|| outs.iter().sum::<f64>() / outs.len() as f64)
                })
                .collect();
            let (ys, ps): (Vec<f64>, Vec<f64>) =
                preds.iter().zip(y).filter_map(|(p, &t)| p.map(|p| (t, p))).unzip();
            let r2 = if ys.len() >= 2 { crate::evalstat::r2(&ys, &ps).ok() } else { None };
            (Some(preds), r2)
        }
        None => (None, None),
    };
    Ok(Forest { spec: *spec, names: table.names.clone(), trees, in_bag, oob_predictions, importances, oob_r2 })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RfBuildConfig {
    /// Spec of the forest that ranks variables during elimination.
    pub initial: RfSpec,
    /// Number of hyperparameter sets the search evaluates.
    pub search_evals: usize,
    pub folds: usize,
}

impl Default for RfBuildConfig {
    fn default() -> Self {
        Self { initial: RfSpec::default(), search_evals: 1000, folds: 10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RfBuild {
    /// Best radius per variable category.
    pub candidates: Vec<String>,
    /// Each elimination round: the variable set and its out-of-bag R².
    pub elimination: Vec<(Vec<String>, f64)>,
    pub selected: Vec<String>,
    /// Every searched spec with its mean cross-validated R².
    pub search: Vec<(RfSpec, f64)>,
    pub spec: RfSpec,
    pub forest: Forest,
}

/// Random-forest building: best buffer per category, importance-driven
/// backward elimination scored by out-of-bag R², stochastic search over
/// the hyperparameter space scored by k-fold cross-validation, and a final
/// refit on all rows.
pub fn rf_build(table: &Table, y: &[f64], seed: u64, cfg: &RfBuildConfig) -> Result<RfBuild> {
    check_xy(table, y)?;
    cfg.initial.validate()?;
    if !cfg.initial.bootstrap {
        return Err(invalid("variable elimination scores by out-of-bag R² and needs bootstrap"));
    }
    if cfg.search_evals == 0 || cfg.folds < 2 || cfg.folds > y.len() {
        return Err(invalid("search needs at least one evaluation and 2 ≤ folds ≤ rows"));
    }
    let keep = best_per_category(table, y);
    let candidates: Vec<String> = keep.iter().map(|&j| table.names[j].clone()).collect();

    let mut current = candidates.clone();
    let mut elimination = Vec::new();
    let mut round = 0u64;
    while !current.is_empty() {
        let forest = rf_fit(&table.select_names(&current)?, y, &cfg.initial, derive(seed, 0x100 + round))?;
        let score = forest.oob_r2().unwrap_or(f64::NEG_INFINITY);
        elimination.push((current.clone(), score));
        let weakest = forest
            .importances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .expect("non-empty");
        current.remove(weakest);
        round += 1;
    }
    let mut best_round = 0;
    for (k, (_, s)) in elimination.iter().enumerate() {
        if *s > elimination[best_round].1 {
            best_round = k;
        }
    }
    let selected = elimination[best_round].0.clone();
    let data = table.select_names(&selected)?;

    let folds = kfold(y.len(), cfg.folds, &mut derived(seed, 0x200));
    let mut spec_rng = derived(seed, 0x300);
    let mut search = Vec::with_capacity(cfg.search_evals);
    for k in 0..cfg.search_evals {
        let spec = RfSpec::sample(&mut spec_rng);
        let fit_seed = derive(seed, 0x1000 + k as u64);
        let score = cross_validate(&data, y, &folds, |tr, ytr, te| rf_fit(tr, ytr, &spec, fit_seed)?.predict(te))?;
        search.push((spec, score));
    }
    let mut best = 0;
    for (k, (_, s)) in search.iter().enumerate() {
        if *s > search[best].1 {
            best = k;
        }
    }
    let spec = search[best].0;
    let forest = rf_fit(&data, y, &spec, derive(seed, 0x400))?;
    Ok(RfBuild { candidates, elimination, selected, search, spec, forest })
}
