use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::autodiff::{mse_loss, Adam, AdamConfig, Affine, Layer, Linear, Mode, Relu, Sequential, Tensor};
use crate::error::{invalid, Error, Result};
use crate::model::{stratified_validation_split, EarlyStopping, EpochRecord, StopDecision, TrainConfig};
use crate::prelude::*;
use crate::rng::{derive, derived, seeded, Rng};

use super::{best_per_category, check_xy, cross_validate, kfold, Table};

/// Hidden-layer widths of a ReLU perceptron with a linear scalar output.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
}

impl MlpSpec {
    pub const MAX_LAYERS: usize = 3;
    pub const MAX_WIDTH: usize = 30;

    pub fn validate(&self) -> Result<()> {
        if !(1..=Self::MAX_LAYERS).contains(&self.hidden.len())
            || self.hidden.iter().any(|w| !(1..=Self::MAX_WIDTH).contains(w))
        {
            return Err(invalid(format!("MLP needs 1-3 hidden layers of 1-30 units, got {:?}", self.hidden)));
        }
        Ok(())
    }

    /// Layer count and each width drawn uniformly.
    pub fn sample(rng: &mut Rng) -> Self {
        let layers = rng.random_range(1..=Self::MAX_LAYERS);
        Self { hidden: (0..layers).map(|_| rng.random_range(1..=Self::MAX_WIDTH)).collect() }
    }

    fn network(&self, inputs: usize, seed: u64) -> Sequential<f64> {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in &self.hidden {
            layers.push(Layer::Linear(Linear::new(width, h)));
            layers.push(Layer::Relu(Relu::new()));
            width = h;
        }
        layers.push(Layer::Linear(Linear::new(width, 1)));
        layers.push(Layer::Affine(Affine::new(1.0, 0.0)));
        let mut net = Sequential::new(layers);
        net.init(&mut seeded(seed));
        net
    }
}

/// A trained perceptron with the input standardization it was trained on.
#[derive(Clone, Debug)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub names: Vec<String>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub net: Sequential<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl MlpModel {
    fn standardized(&self, table: &Table) -> Result<Tensor<f64>> {
        let t = table.select_names(&self.names)?;
        let (n, p) = (t.n_rows(), t.n_cols());
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                data.push((t.columns[j][i] - self.input_mean[j]) / self.input_std[j]);
            }
        }
        Tensor::from_vec(&[n, p], data)
    }

    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        if table.n_rows() == 0 {
            return Ok(Vec::new());
        }
        Ok(self.net.infer(self.standardized(table)?)?.into_data())
    }
}

/// Adam/MSE training of one architecture with early stopping on a
/// stratified validation split. Inputs are standardized with training
/// statistics; outputs are trained in standardized units.
pub fn mlp_fit(table: &Table, y: &[f64], spec: &MlpSpec, cfg: &TrainConfig) -> Result<MlpModel> {
    check_xy(table, y)?;
    spec.validate()?;
    cfg.validate()?;
    let p = table.n_cols();
    if p == 0 {
        return Err(invalid("MLP needs at least one input"));
    }
    let (train_idx, val_idx) = stratified_validation_split(y, cfg.validation_fraction, cfg.seed);
    if train_idx.len() < 2 || val_idx.is_empty() {
        return Err(invalid("too few rows to hold out a validation set"));
    }
    let stats = |v: &[f64]| {
        let m = train_idx.iter().map(|&i| v[i]).sum::<f64>() / train_idx.len() as f64;
        let var = train_idx.iter().map(|&i| (v[i] - m).powi(2)).sum::<f64>() / train_idx.len() as f64;
        (m, if var > 0.0 { var.sqrt() } else { 1.0 })
    };
    let (input_mean, input_std): (Vec<f64>, Vec<f64>) = table.columns.iter().map(|c| stats(c)).unzip();
    let (y_mean, y_std) = stats(y);

    let mut model = MlpModel {
        spec: spec.clone(),
        names: table.names.clone(),
        input_mean,
        input_std,
        net: spec.network(p, derive(cfg.seed, 1)),
        history: Vec::new(),
        best_epoch: 0,
    };
    if let Some(Layer::Affine(a)) = model.net.layers_mut().last_mut() {
        *a = Affine::new(y_std, y_mean);
    }
    let x = model.standardized(table)?;
    let row = |i: usize| &x.data()[i * p..(i + 1) * p];
    let val_x: Vec<f64> = val_idx.iter().flat_map(|&i| row(i).iter().copied()).collect();
    let val_x = Tensor::from_vec(&[val_idx.len(), p], val_x)?;
    let val_y: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();

    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut order_rng = derived(cfg.seed, 2);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_net = model.net.clone();
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb: Vec<f64> = batch.iter().flat_map(|&i| row(i).iter().copied()).collect();
            let out = model.net.forward(Tensor::from_vec(&[batch.len(), p], xb)?, Mode::Train)?;
            let t: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (loss, grad) = mse_loss(out.data(), &t)?;
            if !loss.is_finite() {
                model.net.clear_caches();
                return Err(Error::Divergence { epoch });
            }
            model.net.backward(Tensor::from_vec(out.shape(), grad)?, false)?;
            adam.step(&mut model.net.parameters_mut())?;
            model.net.zero_grad();
            loss_sum += loss * batch.len() as f64;
        }
        let preds = model.net.infer(val_x.clone())?.into_data();
        let val_score = match crate::evalstat::r2(&val_y, &preds) {
            Ok(v) => v,
            Err(_) => -val_y.iter().zip(&preds).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / val_y.len() as f64,
        };
        if !val_score.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.history.push(EpochRecord { epoch, train_loss: loss_sum / train_idx.len() as f64, val_score });
        match stopper.observe(epoch, val_score) {
            StopDecision::Improved => best_net = model.net.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.best_epoch = stopper.best().map_or(0, |b| b.0);
    model.net = best_net;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MlpBuildConfig {
    /// Number of architectures the search evaluates.
    pub search_evals: usize,
    pub folds: usize,
    pub train: TrainConfig,
}

impl Default for MlpBuildConfig {
    fn default() -> Self {
        Self { search_evals: 500, folds: 10, train: TrainConfig { batch_size: 32, augment: false, ..TrainConfig::default() } }
    }
}

#[derive(Clone, Debug)]
pub struct MlpBuild {
    pub selected: Vec<String>,
    /// Every searched architecture with its mean cross-validated R².
    pub search: Vec<(MlpSpec, f64)>,
    pub spec: MlpSpec,
    pub cv_r2: f64,
    pub model: MlpModel,
}

/// Perceptron building: best buffer per category, random architecture
/// search scored by k-fold cross-validation, then training of the winner on
/// all rows.
pub fn mlp_build(table: &Table, y: &[f64], seed: u64, cfg: &MlpBuildConfig) -> Result<MlpBuild> {
    check_xy(table, y)?;
    if cfg.search_evals == 0 || cfg.folds < 2 || cfg.folds > y.len() {
        return Err(invalid("search needs at least one evaluation and 2 ≤ folds ≤ rows"));
    }
    let keep = best_per_category(table, y);
    let data = table.select(&keep);
    let selected = data.names.clone();
    let folds = kfold(y.len(), cfg.folds, &mut derived(seed, 0x200));
    let mut spec_rng = derived(seed, 0x300);
    let mut search = Vec::with_capacity(cfg.search_evals);
    for k in 0..cfg.search_evals {
        let spec = MlpSpec::sample(&mut spec_rng);
        let train = TrainConfig { seed: derive(seed, 0x1000 + k as u64), ..cfg.train.clone() };
        let score = cross_validate(&data, y, &folds, |tr, ytr, te| mlp_fit(tr, ytr, &spec, &train)?.predict(te))?;
        search.push((spec, score));
    }
    let mut best = 0;
    for (k, (_, s)) in search.iter().enumerate() {
        if *s > search[best].1 {
            best = k;
        }
    }
    let (spec, cv_r2) = search[best].clone();
    let model = mlp_fit(&data, y, &spec, &TrainConfig { seed: derive(seed, 0x400), ..cfg.train.clone() })?;
    Ok(MlpBuild { selected, search, spec, cv_r2, model })
}
