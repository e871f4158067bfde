use maplur_core::baselines::{
    cart_regressor, mlp_build, ols_fit, rf_build, rf_fit, stepwise_linear, vif, MeanModel, MlpBuildConfig,
    RfBuildConfig, RfSpec, Table, TreeNode, TreeParams, P_VALUE_LIMIT, VIF_LIMIT,
};
use maplur_core::error::Error;
use maplur_core::evalstat::r2;
use maplur_core::model::TrainConfig;
use maplur_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn table(names: &[&str], columns: Vec<Vec<f64>>) -> Table {
    Table::new(names.iter().map(|s| s.to_string()).collect(), columns).unwrap()
}

/// Dense Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Normal-equations least squares with an intercept; returns (beta, R²).
fn normal_equations(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut design = vec![vec![1.0; n]];
    design.extend(columns.iter().cloned());
    let q = design.len();
    let xtx: Vec<Vec<f64>> =
        (0..q).map(|i| (0..q).map(|j| (0..n).map(|k| design[i][k] * design[j][k]).sum()).collect()).collect();
    let xty: Vec<f64> = (0..q).map(|i| (0..n).map(|k| design[i][k] * y[k]).sum()).collect();
    let beta = solve(xtx, xty);
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = (0..n).map(|k| (y[k] - (0..q).map(|i| beta[i] * design[i][k]).sum::<f64>()).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    (beta, 1.0 - ss_res / ss_tot)
}

#[test]
fn mean_model_examples() {
    let m = MeanModel::fit(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(m.predict(), 2.0);
    assert_eq!(r2(&[1.0, 2.0, 3.0], &m.predict_many(3)).unwrap(), 0.0);
    assert_eq!(MeanModel::fit(&[5.0]).unwrap().predict(), 5.0);
    assert!(matches!(MeanModel::fit(&[]), Err(Error::InvalidArgument(_))));
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = seeded(11);
    for _ in 0..20 {
        let n = rng.random_range(20..80);
        let p = rng.random_range(1..6);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal(&mut rng) * 3.0).collect()).collect();
        let y: Vec<f64> =
            (0..n).map(|i| 1.5 + cols.iter().enumerate().map(|(j, c)| (j as f64 - 1.0) * c[i]).sum::<f64>() + normal(&mut rng)).collect();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let fit = ols_fit(&Table::new(names, cols.clone()).unwrap(), &y).unwrap();
        let (beta, r2_oracle) = normal_equations(&cols, &y);
        assert!((fit.intercept - beta[0]).abs() < 1e-8);
        for j in 0..p {
            assert!((fit.coefficients[j] - beta[j + 1]).abs() < 1e-8);
        }
        assert!((fit.r2 - r2_oracle).abs() < 1e-10);
        assert!(fit.adj_r2 <= fit.r2);

        let resid: Vec<f64> = (0..n).map(|i| y[i] - fit.predict_row(&cols.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
        let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid.iter().sum::<f64>().abs() < 1e-8 * scale * n as f64);
        for c in &cols {
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = resid.iter().zip(c).map(|(r, x)| r * x).sum();
            assert!(dot.abs() < 1e-8 * scale * norm);
        }
    }
}

#[test]
fn ols_p_values_follow_the_t_distribution() {
    // df = 1 makes the t distribution Cauchy: p = 1 − 2·atan(|t|)/π.
    let x = vec![0.0, 1.0, 2.0];
    let y = vec![0.0, 2.0, 1.0];
    let fit = ols_fit(&table(&["x"], vec![x]), &y).unwrap();
    let t = fit.t_stats[0];
    let expected = 1.0 - 2.0 * t.abs().atan() / std::f64::consts::PI;
    assert!((fit.p_values[0] - expected).abs() < 1e-12);
    assert!(matches!(ols_fit(&table(&["x"], vec![vec![1.0, 2.0]]), &[1.0, 2.0]), Err(Error::InvalidArgument(_))));
    assert_eq!(ols_fit(&table(&["x"], vec![vec![1.0, 2.0, 3.0]]), &[4.0; 3]).unwrap_err(), Error::UndefinedVariance);
}

fn noise_table(rng: &mut impl Rng, n: usize, k: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let names = (0..k).map(|j| format!("noise{j}")).collect();
    let cols = (0..k).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    (names, cols)
}

/// Best adjusted R² of any single noise column, by brute force.
fn best_single_adj_r2(cols: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    cols.iter()
        .map(|c| {
            let (_, r2) = normal_equations(std::slice::from_ref(c), y);
            1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn stepwise_picks_the_planted_predictor() {
    for seed in 0..5 {
        let mut rng = seeded(100 + seed);
        let n = 300;
        let signal: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = signal.iter().map(|s| 3.0 * s + 1.0).collect();
        let (mut names, mut cols) = noise_table(&mut rng, n, 9);
        names.insert(4, "signal".into());
        cols.insert(4, signal);
        let m = stepwise_linear(&Table::new(names, cols.clone()).unwrap(), &y).unwrap();
        assert_eq!(m.selected, vec!["signal".to_string()]);
        assert!(!m.degenerate);
        // Brute force: every noise column alone is far below the planted one,
        // and adding any of them cannot lift a perfect fit.
        let noise: Vec<Vec<f64>> = cols.iter().enumerate().filter(|(j, _)| *j != 4).map(|(_, c)| c.clone()).collect();
        assert!(best_single_adj_r2(&noise, &y) < 0.2);
        assert!((m.fit.r2 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn stepwise_purges_a_duplicated_feature() {
    for seed in 0..5 {
        let mut rng = seeded(200 + seed);
        let n = 400;
        let a: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * a[i] - b[i] + 0.5 * normal(&mut rng)).collect();
        let (mut names, mut cols) = noise_table(&mut rng, n, 3);
        names.extend(["alpha".to_string(), "beta".to_string(), "alpha_copy".to_string()]);
        cols.extend([a.clone(), b, a]);
        let t = Table::new(names, cols).unwrap();
        let m = stepwise_linear(&t, &y).unwrap();
        let copies = m.selected.iter().filter(|s| s.starts_with("alpha")).count();
        assert_eq!(copies, 1, "{:?}", m.selected);
        assert!(m.selected.contains(&"beta".to_string()));
        let both = t.select_names(&["alpha".into(), "alpha_copy".into(), "beta".into()]).unwrap();
        let v = vif(&both);
        assert!(v[0].is_infinite() && v[1].is_infinite());
    }
}

#[test]
fn near_duplicate_vif_diverges() {
    let mut rng = seeded(9);
    let a: Vec<f64> = (0..200).map(|_| normal(&mut rng)).collect();
    let a2: Vec<f64> = a.iter().map(|v| v + 0.05 * normal(&mut rng)).collect();
    let c: Vec<f64> = (0..200).map(|_| normal(&mut rng)).collect();
    let v = vif(&table(&["a", "a2", "c"], vec![a.clone(), a2.clone(), c.clone()]));
    assert!(v[0] > 100.0 && v[1] > 100.0);
    assert!(v[2] < 1.2);
    // Oracle: 1/(1 − R²) of c on the rest.
    let (_, r2c) = normal_equations(&[a, a2], &c);
    assert!((v[2] - 1.0 / (1.0 - r2c)).abs() < 1e-9);
}

#[test]
fn stepwise_on_noise_is_degenerate() {
    let mut degenerate = 0;
    for seed in 0..20 {
        let mut rng = seeded(300 + seed);
        let n = 2000;
        let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let (names, cols) = noise_table(&mut rng, n, 10);
        let m = stepwise_linear(&Table::new(names, cols).unwrap(), &y).unwrap();
        if m.degenerate {
            degenerate += 1;
            assert!(m.selected.is_empty());
            assert!(m.fit.coefficients.is_empty());
            assert!((m.fit.intercept - y.iter().sum::<f64>() / n as f64).abs() < 1e-12);
        }
    }
    assert!(degenerate >= 18, "{degenerate}/20");
}

#[test]
fn stepwise_needs_two_candidates() {
    assert!(matches!(stepwise_linear(&table(&["x"], vec![vec![1.0, 2.0, 3.0, 4.0]]), &[1.0, 2.0, 4.0, 3.0]), Err(Error::InvalidArgument(_))));
}

/// Correlated design with buffered radii so category selection also runs.
fn correlated_dataset(seed: u64, n: usize) -> (Table, Vec<f64>) {
    let mut rng = seeded(seed);
    let z: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (k, base) in ["area_a", "area_b", "len_c"].iter().enumerate() {
        for r in [50, 100] {
            names.push(format!("{base}_{r}"));
            let w = if r == 50 { 0.7 } else { 0.9 };
            cols.push((0..n).map(|i| w * z[k][i] + 0.6 * z[k + 1][i] + 0.4 * normal(&mut rng)).collect::<Vec<f64>>());
        }
    }
    names.push("dist_x".into());
    cols.push((0..n).map(|i| z[0][i] + z[3][i] + 0.3 * normal(&mut rng)).collect());
    let y = (0..n).map(|i| z[0][i] - 0.5 * z[2][i] + 0.3 * z[3][i] + normal(&mut rng)).collect();
    (Table::new(names, cols).unwrap(), y)
}

#[test]
fn stepwise_post_audit() {
    let mut audited = 0;
    let mut pruned = 0;
    for seed in 0..15 {
        let (t, y) = correlated_dataset(seed, 150);
        let m = stepwise_linear(&t, &y).unwrap();
        if m.degenerate {
            continue;
        }
        audited += 1;
        pruned += m.removed_by_p_value.len() + m.removed_by_vif.len();
        let refit = ols_fit(&t.select_names(&m.selected).unwrap(), &y).unwrap();
        assert!(refit.p_values.iter().all(|&p| p <= P_VALUE_LIMIT), "{:?}", refit.p_values);
        // Independent VIF: regress each survivor on the others.
        let cols: Vec<Vec<f64>> = m.selected.iter().map(|s| t.columns[t.column_index(s).unwrap()].clone()).collect();
        for j in 0..cols.len() {
            let vj = if cols.len() == 1 {
                1.0
            } else {
                let others: Vec<Vec<f64>> = cols.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c.clone()).collect();
                1.0 / (1.0 - normal_equations(&others, &cols[j]).1)
            };
            assert!(vj <= VIF_LIMIT, "seed {seed}: {vj}");
        }
        // At most one radius per category.
        let mut cats: Vec<&str> = m.selected.iter().map(|s| maplur_core::baselines::category(s)).collect();
        cats.sort_unstable();
        let len = cats.len();
        cats.dedup();
        assert_eq!(cats.len(), len);
    }
    assert!(audited >= 10 && pruned > 0, "{audited} audited, {pruned} pruned");
}

fn sse(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum()
}

#[test]
fn depth_one_split_is_the_exhaustive_optimum() {
    let params = TreeParams { max_features: 1, min_samples_leaf: 1, min_samples_split: 2, max_depth: Some(1) };
    for seed in 0..20 {
        let mut rng = seeded(400 + seed);
        let n = rng.random_range(5..60);
        let x: Vec<f64> = (0..n).map(|_| (rng.random_range(0..30) as f64) * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() * 3.0 + normal(&mut rng)).collect();
        let mut distinct = x.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 2 {
            continue;
        }
        let mut best = (f64::INFINITY, 0.0);
        for w in distinct.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = (0..n).filter(|&i| x[i] <= thr).map(|i| y[i]).collect();
            let right: Vec<f64> = (0..n).filter(|&i| x[i] > thr).map(|i| y[i]).collect();
            let cost = sse(&left) + sse(&right);
            if cost < best.0 - 1e-9 {
                best = (cost, thr);
            }
        }
        let tree = cart_regressor(&table(&["x"], vec![x]), &y, &params, seed).unwrap();
        match tree.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - best.1).abs() < 1e-12, "{threshold} vs {}", best.1);
            }
            _ => panic!("root did not split"),
        }
        assert_eq!(tree.depth(), 1);
    }
}

#[test]
fn cart_memorizes_distinct_rows() {
    let mut rng = seeded(5);
    let n = 80;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let t = table(&["a", "b", "c"], cols);
    let params = TreeParams { max_features: 3, min_samples_leaf: 1, min_samples_split: 2, max_depth: None };
    let tree = cart_regressor(&t, &y, &params, 1).unwrap();
    let pred: Vec<f64> = (0..n).map(|i| tree.predict_row(&t.row(i))).collect();
    assert_eq!(r2(&y, &pred).unwrap(), 1.0);

    let spec = RfSpec { n_trees: 1, max_features_fraction: 1.0, bootstrap: false, ..RfSpec::default() };
    let forest = rf_fit(&t, &y, &spec, 1).unwrap();
    assert_eq!(forest.predict(&t).unwrap(), y);
    assert!(matches!(forest.oob_r2(), Err(Error::UnavailableStatistic(_))));
}

#[test]
fn importance_singles_out_the_informative_feature() {
    for seed in 0..10 {
        let mut rng = seeded(500 + seed);
        let n = 300;
        let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        let y: Vec<f64> = cols[2].iter().map(|a| (2.0 * a).tanh() * 4.0 + 0.3 * normal(&mut rng)).collect();
        let t = table(&["n0", "n1", "a", "n3", "n4"], cols);
        let spec = RfSpec { n_trees: 60, ..RfSpec::default() };
        let f = rf_fit(&t, &y, &spec, seed).unwrap();
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in [0, 1, 3, 4] {
            assert!(f.importances[2] > f.importances[j], "seed {seed}: {:?}", f.importances);
        }
    }
}

fn forest_dataset(seed: u64, n: usize) -> (Table, Vec<f64>) {
    let mut rng = seeded(seed);
    let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let y = (0..n).map(|i| cols[0][i] * cols[1][i] + cols[2][i] + 0.2 * normal(&mut rng)).collect();
    (table(&["a", "b", "c", "d"], cols), y)
}

#[test]
fn forest_is_the_mean_of_its_trees() {
    let (t, y) = forest_dataset(1, 120);
    let spec = RfSpec { n_trees: 37, max_features_fraction: 0.5, min_samples_leaf: 3, ..RfSpec::default() };
    let f = rf_fit(&t, &y, &spec, 7).unwrap();
    assert_eq!(f.trees.len(), 37);
    for i in 0..t.n_rows() {
        let row = t.row(i);
        let mean = f.trees.iter().map(|tr| tr.predict_row(&row)).sum::<f64>() / 37.0;
        assert_eq!(f.predict_row(&row), mean);
    }
}

#[test]
fn oob_bookkeeping_audit() {
    let (t, y) = forest_dataset(2, 150);
    let spec = RfSpec { n_trees: 40, ..RfSpec::default() };
    let f = rf_fit(&t, &y, &spec, 3).unwrap();
    let bags = f.in_bag.as_ref().unwrap();
    assert_eq!(bags.len(), 40);
    assert!(bags.iter().all(|b| b.iter().sum::<u32>() == 150));
    let oob = f.oob_predictions.as_ref().unwrap();
    let (mut ys, mut ps) = (Vec::new(), Vec::new());
    for i in 0..150 {
        let row = t.row(i);
        let outs: Vec<f64> = (0..40).filter(|&k| bags[k][i] == 0).map(|k| f.trees[k].predict_row(&row)).collect();
        if outs.is_empty() {
            assert!(oob[i].is_none());
            continue;
        }
        let p = outs.iter().sum::<f64>() / outs.len() as f64;
        assert!((oob[i].unwrap() - p).abs() < 1e-12);
        ys.push(y[i]);
        ps.push(p);
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = ys.iter().zip(&ps).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|a| (a - mean).powi(2)).sum();
    assert!((f.oob_r2().unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    // Out-of-bag skill is honest: below the in-sample fit.
    assert!(f.oob_r2().unwrap() < r2(&y, &f.predict(&t).unwrap()).unwrap());
}

/// Informative area/length variables at two radii plus noise columns.
fn informative_dataset(seed: u64, n: usize) -> (Table, Vec<f64>, Vec<&'static str>) {
    let mut rng = seeded(seed);
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let s1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let s2: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    for (base, s) in [("area_x", &s1), ("length_y", &s2)] {
        names.push(format!("{base}_50"));
        cols.push(s.iter().map(|v| v + 0.8 * normal(&mut rng)).collect());
        names.push(format!("{base}_100"));
        cols.push(s.clone());
    }
    for k in 0..4 {
        names.push(format!("dist_noise{k}"));
        cols.push((0..n).map(|_| normal(&mut rng)).collect());
    }
    let y = (0..n).map(|i| 2.0 * s1[i] + (1.5 * s2[i]).sin() * 2.0 + 0.3 * normal(&mut rng)).collect();
    (Table::new(names, cols).unwrap(), y, vec!["area_x_100", "length_y_100"])
}

fn small_rf_config(evals: usize) -> RfBuildConfig {
    RfBuildConfig { initial: RfSpec { n_trees: 40, ..RfSpec::default() }, search_evals: evals, folds: 5 }
}

#[test]
fn rf_build_keeps_every_informative_variable() {
    for seed in 0..5 {
        let (t, y, informative) = informative_dataset(600 + seed, 200);
        let b = rf_build(&t, &y, seed, &small_rf_config(2)).unwrap();
        assert_eq!(b.candidates.len(), 6);
        assert!(b.candidates.iter().any(|c| c == "area_x_100") && !b.candidates.iter().any(|c| c == "area_x_50"));
        for v in &informative {
            assert!(b.selected.iter().any(|s| s == v), "seed {seed}: {:?}", b.selected);
        }
        assert_eq!(b.elimination.len(), 6);
        let best = b.elimination.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        assert!(b.elimination.iter().any(|e| e.0 == b.selected && e.1 == best));
    }
}

#[test]
fn rf_build_budget_one_and_determinism() {
    let (t, y, _) = informative_dataset(700, 150);
    let a = rf_build(&t, &y, 42, &small_rf_config(1)).unwrap();
    assert_eq!(a.search.len(), 1);
    assert_eq!(a.spec, a.search[0].0);
    let b = rf_build(&t, &y, 42, &small_rf_config(1)).unwrap();
    assert_eq!(a, b);
    let c = rf_build(&t, &y, 42, &small_rf_config(3)).unwrap();
    assert_eq!(c.search[0], a.search[0]);
    let best = c.search.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(c.search.iter().find(|s| s.1 == best).unwrap().0, c.spec);
}

fn fast_mlp_config(evals: usize) -> MlpBuildConfig {
    let train = TrainConfig { lr: 1e-2, batch_size: 32, max_epochs: 150, patience: 20, augment: false, ..TrainConfig::default() };
    MlpBuildConfig { search_evals: evals, folds: 10, train }
}

#[test]
fn mlp_learns_a_linear_truth() {
    let mut rng = seeded(800);
    let n = 300;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| 10.0 + 5.0 * normal(&mut rng)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|i| 40.0 + 2.0 * cols[0][i] - 1.5 * cols[1][i] + 0.5 * cols[2][i] + normal(&mut rng)).collect();
    let t = table(&["u", "v", "w"], cols);
    let b = mlp_build(&t, &y, 1, &fast_mlp_config(3)).unwrap();
    assert!(b.cv_r2 >= 0.9, "{}", b.cv_r2);
    assert_eq!(b.search.len(), 3);
    b.spec.validate().unwrap();
    let pred = b.model.predict(&t).unwrap();
    assert!(r2(&y, &pred).unwrap() >= 0.9);
    assert!(b.model.best_epoch >= 1 && b.model.best_epoch <= b.model.history.len());
    assert!(b.model.history.len() <= b.model.best_epoch + 20);
}

#[test]
fn mlp_build_is_deterministic() {
    let (t, y) = forest_dataset(9, 80);
    let cfg = MlpBuildConfig { search_evals: 1, folds: 4, ..fast_mlp_config(1) };
    let a = mlp_build(&t, &y, 5, &cfg).unwrap();
    let b = mlp_build(&t, &y, 5, &cfg).unwrap();
    assert_eq!(a.spec, b.spec);
    assert_eq!(a.search, b.search);
    assert_eq!(a.model.predict(&t).unwrap(), b.model.predict(&t).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjusted_r2_never_exceeds_r2(seed in 0u64..10_000, p in 1usize..5) {
        let mut rng = seeded(seed);
        let n = p + 3 + (seed % 20) as usize;
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        let fit = ols_fit(&Table::new(names, cols).unwrap(), &y).unwrap();
        prop_assert!(fit.adj_r2 <= fit.r2 + 1e-15);
        prop_assert!(fit.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn forest_predictions_stay_within_target_range(seed in 0u64..10_000) {
        let (t, y) = forest_dataset(seed, 40);
        let spec = RfSpec { n_trees: 5, ..RfSpec::default() };
        let f = rf_fit(&t, &y, &spec, seed).unwrap();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in f.predict(&t).unwrap() {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}
