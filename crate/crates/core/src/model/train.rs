use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::autodiff::{mse_loss, Adam, AdamConfig, Layer, Mode, Sequential, Tensor};
use crate::error::{invalid, shape, Error, Result};
use crate::evalstat::r2;
use crate::prelude::*;
use crate::rng;
use crate::scene::TileImage;

use super::{dihedral, Dihedral, MapLurSpec};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Draw one dihedral transform per image per epoch.
    pub augment: bool,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, batch_size: 400, max_epochs: 2000, patience: 20, augment: true, validation_fraction: 0.1, seed: 0 }
    }
}

impl TrainConfig {
    /// CPU-sized profile: batch 64 (pair with [`MapLurSpec::desk`]).
    pub fn desk() -> Self {
        Self { batch_size: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(invalid("validation fraction must lie in (0, 0.5)"));
        }
        if self.patience == 0 || self.batch_size < 2 || self.max_epochs == 0 {
            return Err(invalid("patience and max_epochs must be positive and batch_size at least 2"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation R², or the negated validation MSE when the validation
    /// targets are constant and R² is undefined.
    pub val_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored score has failed to strictly increase for
/// `patience` consecutive epochs. Epochs are 1-based.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = match self.best {
            None => !score.is_nan(),
            Some((_, best)) => score > best,
        };
        if improved {
            self.best = Some((epoch, score));
            return StopDecision::Improved;
        }
        let since_best = epoch - self.best.map_or(0, |b| b.0);
        if since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// A trained network plus its training record. `net` holds the parameters
/// of the best validation epoch.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: MapLurSpec,
    pub net: Sequential<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_score: f64,
    pub stopped_early: bool,
    /// Indices (into the training set) held out for validation.
    pub validation_indices: Vec<usize>,
}

/// Splits `targets` into train/validation index sets, holding out
/// `fraction` of each target decile.
pub fn stratified_validation_split(targets: &[f64], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]).then(a.cmp(&b)));
    let mut r = rng::derived(seed, 0x5A11);
    let n = targets.len();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for d in 0..10 {
        let (lo, hi) = (d * n / 10, (d + 1) * n / 10);
        let mut bin = order[lo..hi].to_vec();
        bin.shuffle(&mut r);
        let k = libm::round(fraction * bin.len() as f64) as usize;
        val.extend_from_slice(&bin[..k]);
        train.extend_from_slice(&bin[k..]);
    }
    if val.is_empty() && train.len() > 1 {
        val.push(train.pop().expect("non-empty"));
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn check_images(spec: &MapLurSpec, images: &[TileImage]) -> Result<()> {
    for (i, img) in images.iter().enumerate() {
        if img.channels() != spec.in_channels || img.height() != spec.input_px || img.width() != spec.input_px {
            return Err(shape(format!(
                "image {i} is {}x{}x{}, network expects {}x{}x{}",
                img.channels(),
                img.height(),
                img.width(),
                spec.in_channels,
                spec.input_px,
                spec.input_px
            )));
        }
    }
    Ok(())
}

fn batch_tensor<'a>(spec: &MapLurSpec, images: impl Iterator<Item = &'a TileImage>) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        data.extend_from_slice(img.data());
        n += 1;
    }
    Tensor::from_vec(&[n, spec.in_channels, spec.input_px, spec.input_px], data)
}

fn set_output_scale(net: &mut Sequential<f32>, mean: f64, std: f64) {
    if let Some(Layer::Affine(a)) = net.layers_mut().last_mut() {
        a.scale = std as f32;
        a.shift = mean as f32;
    }
}

/// Evaluation-mode predictions for a set of images, in batches.
pub(crate) fn infer_many(net: &Sequential<f32>, spec: &MapLurSpec, images: &[&TileImage]) -> Result<Vec<f64>> {
    if !net.eval_ready() {
        return Err(Error::UninitializedStats);
    }
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(128) {
        let x = batch_tensor(spec, chunk.iter().copied())?;
        let y = net.infer(x)?;
        out.extend(y.data().iter().map(|&v| v as f64));
    }
    Ok(out)
}

fn score(targets: &[f64], preds: &[f64]) -> f64 {
    match r2(targets, preds) {
        Ok(v) => v,
        Err(_) => {
            let mse = targets.iter().zip(preds).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / targets.len() as f64;
            -mse
        }
    }
}

pub fn train(spec: &MapLurSpec, images: &[TileImage], targets: &[f64], cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with(spec, images, targets, cfg, |_| {})
}

/// Adam/MSE training with per-epoch dihedral augmentation and early
/// stopping on validation R². `on_epoch` observes every epoch record.
pub fn train_with(
    spec: &MapLurSpec,
    images: &[TileImage],
    targets: &[f64],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    spec.validate()?;
    cfg.validate()?;
    if images.is_empty() || images.len() != targets.len() {
        return Err(invalid("training needs a non-empty dataset with one target per image"));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(invalid("training targets must be finite"));
    }
    check_images(spec, images)?;
    let (train_idx, val_idx) = stratified_validation_split(targets, cfg.validation_fraction, cfg.seed);
    if train_idx.len() < 2 || val_idx.is_empty() {
        return Err(invalid("dataset too small to split into training and validation sets"));
    }

    let n_train = train_idx.len() as f64;
    let mean = train_idx.iter().map(|&i| targets[i]).sum::<f64>() / n_train;
    let var = train_idx.iter().map(|&i| (targets[i] - mean).powi(2)).sum::<f64>() / n_train;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut net = spec.network(rng::derive(cfg.seed, 1))?;
    set_output_scale(&mut net, mean, std);
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut order_rng = rng::derived(cfg.seed, 2);
    let mut aug_rng = rng::derived(cfg.seed, 3);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_net = net.clone();
    let mut stopped_early = false;

    let val_images: Vec<&TileImage> = val_idx.iter().map(|&i| &images[i]).collect();
    let val_targets: Vec<f64> = val_idx.iter().map(|&i| targets[i]).collect();
    let mut order = train_idx.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let mut augmented = Vec::with_capacity(batch.len());
            for &i in batch {
                let img = if cfg.augment {
                    dihedral(&images[i], Dihedral::from_index(aug_rng.random_range(0..8u8)))?
                } else {
                    images[i].clone()
                };
                augmented.push(img);
            }
            let x = batch_tensor(spec, augmented.iter())?;
            let y = net.forward(x, Mode::Train)?;
            let t: Vec<f32> = batch.iter().map(|&i| targets[i] as f32).collect();
            let (loss, grad) = mse_loss(y.data(), &t)?;
            let loss = loss as f64;
            if !loss.is_finite() {
                net.clear_caches();
                return Err(Error::Divergence { epoch });
            }
            let dy = Tensor::from_vec(y.shape(), grad)?;
            net.backward(dy, false)?;
            adam.step(&mut net.parameters_mut())?;
            net.zero_grad();
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { f64::NAN };
        let preds = infer_many(&net, spec, &val_images)?;
        if preds.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let val_score = score(&val_targets, &preds);
        let record = EpochRecord { epoch, train_loss, val_score };
        on_epoch(&record);
        history.push(record);
        match stopper.observe(epoch, val_score) {
            StopDecision::Improved => best_net = net.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val_score) = stopper.best().unwrap_or((0, f64::NAN));
    Ok(TrainedModel {
        spec: spec.clone(),
        net: best_net,
        history,
        best_epoch,
        best_val_score,
        stopped_early,
        validation_indices: val_idx,
    })
}

impl TrainedModel {
    /// Wraps an existing network (e.g. a decoded checkpoint).
    pub fn from_network(spec: MapLurSpec, net: Sequential<f32>) -> Self {
        Self {
            spec,
            net,
            history: Vec::new(),
            best_epoch: 0,
            best_val_score: f64::NAN,
            stopped_early: false,
            validation_indices: Vec::new(),
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    /// Validation score of the stored parameters, recomputed from scratch.
    pub fn rescore_validation(&self, images: &[TileImage], targets: &[f64]) -> Result<f64> {
        let val_images: Vec<&TileImage> = self.validation_indices.iter().map(|&i| &images[i]).collect();
        let val_targets: Vec<f64> = self.validation_indices.iter().map(|&i| targets[i]).collect();
        let preds = infer_many(&self.net, &self.spec, &val_images)?;
        Ok(score(&val_targets, &preds))
    }
}

/// Concentration estimate (µg/m³) for one image.
pub fn predict(model: &TrainedModel, image: &TileImage) -> Result<f64> {
    Ok(predict_batch(model, core::slice::from_ref(image))?[0])
}

pub fn predict_batch(model: &TrainedModel, images: &[TileImage]) -> Result<Vec<f64>> {
    check_images(&model.spec, images)?;
    let refs: Vec<&TileImage> = images.iter().collect();
    infer_many(&model.net, &model.spec, &refs)
}
