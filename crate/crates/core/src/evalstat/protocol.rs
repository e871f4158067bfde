use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::prelude::*;
use crate::rng::{derive, seeded};

use super::EvalResult;

/// Repeated runs per model in the default protocol.
pub const DEFAULT_RUNS: usize = 40;
/// Runs per data-size point for the convolutional model.
pub const CNN_SWEEP_RUNS: usize = 5;
pub const DEFAULT_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
/// Tile side lengths of the area sweep, in metres.
pub const DEFAULT_AREA_SIDES_M: [f64; 6] = [60.0, 80.0, 100.0, 200.0, 500.0, 1000.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    R2,
    Rmse,
}

impl Metric {
    pub fn of(self, r: &EvalResult) -> f64 {
        match self {
            Metric::R2 => r.r2,
            Metric::Rmse => r.rmse,
        }
    }
}

/// One seeded run: its result, or the reason it failed.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub result: Option<EvalResult>,
    pub failure: Option<String>,
}

/// A model's repeated-run results.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSample {
    pub model: String,
    pub runs: Vec<RunRecord>,
}

impl RunSample {
    pub fn results(&self) -> impl Iterator<Item = &EvalResult> {
        self.runs.iter().filter_map(|r| r.result.as_ref())
    }

    pub fn completed(&self) -> usize {
        self.results().count()
    }

    /// Every run produced a result.
    pub fn is_complete(&self) -> bool {
        self.runs.iter().all(|r| r.result.is_some())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.results().map(|r| metric.of(r)).collect()
    }

    /// Mean over completed runs.
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        let v = self.values(metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Sample standard deviation over completed runs.
    pub fn std_dev(&self, metric: Metric) -> Option<f64> {
        let v = self.values(metric);
        if v.len() < 2 {
            return None;
        }
        if v.iter().all(|x| *x == v[0]) {
            return Some(0.0);
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    }

    /// Metric values of runs both samples completed, matched by run index.
    pub fn paired_values(&self, other: &RunSample, metric: Metric) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in &self.runs {
            let Some(x) = &r.result else { continue };
            if let Some(y) = other.runs.iter().find(|o| o.index == r.index).and_then(|o| o.result.as_ref()) {
                a.push(metric.of(x));
                b.push(metric.of(y));
            }
        }
        (a, b)
    }
}

/// Seed of run `index` under `base_seed`.
pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    derive(base_seed, index as u64)
}

/// Folds one run's outcome into a record: divergence becomes a failed run,
/// any other error propagates.
pub fn run_record(index: usize, seed: u64, outcome: Result<EvalResult>) -> Result<RunRecord> {
    match outcome {
        Ok(r) => Ok(RunRecord { index, seed, result: Some(r), failure: None }),
        Err(e @ Error::Divergence { .. }) => Ok(RunRecord { index, seed, result: None, failure: Some(e.to_string()) }),
        Err(e) => Err(e),
    }
}

/// Trains and evaluates `runs` independently seeded instances. `run`
/// receives the run seed and returns the test-set result.
pub fn multirun(
    model: &str,
    runs: usize,
    base_seed: u64,
    mut run: impl FnMut(u64) -> Result<EvalResult>,
) -> Result<RunSample> {
    multirun_batch(model, runs, base_seed, |seeds| seeds.iter().map(|&s| run(s)).collect())
}

/// [`multirun`] with all runs handed over at once, so the caller may
/// execute them concurrently. `run_all` returns one outcome per seed, in
/// seed order.
pub fn multirun_batch(
    model: &str,
    runs: usize,
    base_seed: u64,
    run_all: impl FnOnce(&[u64]) -> Vec<Result<EvalResult>>,
) -> Result<RunSample> {
    if runs == 0 {
        return Err(invalid("at least one run is required"));
    }
    let seeds: Vec<u64> = (0..runs).map(|i| run_seed(base_seed, i)).collect();
    let outcomes = run_all(&seeds);
    if outcomes.len() != runs {
        return Err(invalid(format!("{} outcomes for {runs} runs", outcomes.len())));
    }
    let records = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| run_record(i, seeds[i], o))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSample { model: model.to_string(), runs: records })
}

/// Nested training subsets: prefixes of one seeded permutation of
/// `0..n`, of length `round(f·n)` for each fraction, each sorted.
pub fn nested_subsets(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(invalid(format!("fraction {f} outside (0, 1]")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(seed));
    Ok(fractions
        .iter()
        .map(|f| {
            let mut s = perm[..libm::round(f * n as f64) as usize].to_vec();
            s.sort_unstable();
            s
        })
        .collect())
}

/// One model in a sweep.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepModel {
    pub name: String,
    pub runs: usize,
    /// Settings with fewer training rows than this are skipped.
    pub min_train: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    /// Data fraction or tile side length.
    pub setting: f64,
    pub model: String,
    pub n_train: usize,
    pub mean_r2: f64,
    pub mean_rmse: f64,
    pub sample: RunSample,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Skipped (setting, model, reason).
    pub skipped: Vec<(f64, String, String)>,
}

impl SweepTable {
    pub fn row(&self, setting: f64, model: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.setting == setting && r.model == model)
    }

    /// Setting with the highest mean R² for `model`.
    pub fn best_setting(&self, model: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.model == model)
            .max_by(|a, b| a.mean_r2.total_cmp(&b.mean_r2))
            .map(|r| r.setting)
    }

    fn push(&mut self, setting: f64, model: &str, n_train: usize, sample: RunSample) {
        match (sample.mean(Metric::R2), sample.mean(Metric::Rmse)) {
            (Some(mean_r2), Some(mean_rmse)) => {
                self.rows.push(SweepRow { setting, model: model.to_string(), n_train, mean_r2, mean_rmse, sample })
            }
            _ => self.skipped.push((setting, model.to_string(), "every run failed".into())),
        }
    }
}

/// Data-size sweep over nested subsets of the `n_train` training rows.
/// `run(model, subset, seed)` trains model `model` on the listed rows and
/// returns its test result. Run seeds depend on the model and run index
/// only, so fraction 1.0 repeats a plain [`multirun`] with the same base.
pub fn data_sweep(
    fractions: &[f64],
    models: &[SweepModel],
    n_train: usize,
    seed: u64,
    mut run: impl FnMut(usize, &[usize], u64) -> Result<EvalResult>,
) -> Result<SweepTable> {
    data_sweep_batch(fractions, models, n_train, seed, |m, subset, seeds| {
        seeds.iter().map(|&s| run(m, subset, s)).collect()
    })
}

/// [`data_sweep`] handing each cell's runs over at once.
pub fn data_sweep_batch(
    fractions: &[f64],
    models: &[SweepModel],
    n_train: usize,
    seed: u64,
    mut run_all: impl FnMut(usize, &[usize], &[u64]) -> Vec<Result<EvalResult>>,
) -> Result<SweepTable> {
    let subsets = nested_subsets(n_train, fractions, derive(seed, 0x5EED))?;
    let mut table = SweepTable { rows: Vec::new(), skipped: Vec::new() };
    for (f, subset) in fractions.iter().zip(&subsets) {
        for (m, model) in models.iter().enumerate() {
            if subset.len() < model.min_train {
                table.skipped.push((
                    *f,
                    model.name.clone(),
                    format!("{} training rows < {}", subset.len(), model.min_train),
                ));
                continue;
            }
            let sample = multirun_batch(&model.name, model.runs, model_seed(seed, m), |s| run_all(m, subset, s))?;
            table.push(*f, &model.name, subset.len(), sample);
        }
    }
    Ok(table)
}

/// Area-size sweep: `run(side_m, model, seed)` regenerates inputs at the
/// given tile side, trains and evaluates.
pub fn area_sweep(
    sides_m: &[f64],
    models: &[SweepModel],
    seed: u64,
    mut run: impl FnMut(f64, usize, u64) -> Result<EvalResult>,
) -> Result<SweepTable> {
    area_sweep_batch(sides_m, models, seed, |side, m, seeds| seeds.iter().map(|&s| run(side, m, s)).collect())
}

/// [`area_sweep`] handing each cell's runs over at once.
pub fn area_sweep_batch(
    sides_m: &[f64],
    models: &[SweepModel],
    seed: u64,
    mut run_all: impl FnMut(f64, usize, &[u64]) -> Vec<Result<EvalResult>>,
) -> Result<SweepTable> {
    if let Some(s) = sides_m.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("tile side {s} must be positive")));
    }
    let mut table = SweepTable { rows: Vec::new(), skipped: Vec::new() };
    for &side in sides_m {
        for (m, model) in models.iter().enumerate() {
            let sample = multirun_batch(&model.name, model.runs, model_seed(seed, m), |s| run_all(side, m, s))?;
            table.push(side, &model.name, 0, sample);
        }
    }
    Ok(table)
}

/// Base seed of model `m` within a sweep.
pub fn model_seed(seed: u64, m: usize) -> u64 {
    derive(seed, 0x4D00 + m as u64)
}
