//! The model zoo behind `eval`, `compare` and `sweep`: fitting any model on
//! a set of training rows and predicting others.

use std::fmt;
use std::str::FromStr;

use maplur_core::baselines::{mlp_build, rf_build, stepwise_linear, MeanModel, Table};
use maplur_core::features::feature_matrix;
use maplur_core::model::{predict_batch, train, TrainConfig, TrainedModel};
use maplur_core::scene::{Scene, TileImage};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::synth::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mean,
    /// Stepwise linear regression.
    Linear,
    RandomForest,
    Mlp,
    /// The convolutional MapLUR network.
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Mean, ModelKind::Linear, ModelKind::RandomForest, ModelKind::Mlp, ModelKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mean => "mean",
            ModelKind::Linear => "linear",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        }
    }

    pub fn uses_images(self) -> bool {
        self == ModelKind::Cnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`; expected one of mean, linear, random_forest, mlp, cnn")))
    }
}

/// A dataset with its baseline feature table.
pub struct Workspace<'a> {
    pub cfg: &'a ExperimentConfig,
    pub dataset: &'a Dataset,
    pub features: Option<Table>,
}

impl<'a> Workspace<'a> {
    /// Computes feature rows for every sample when a scene is given.
    pub fn new(cfg: &'a ExperimentConfig, dataset: &'a Dataset, scene: Option<&Scene>) -> Result<Self> {
        let features = match scene {
            Some(scene) => {
                let centers: Vec<[f64; 2]> = dataset.samples.iter().map(|s| [s.x_m, s.y_m]).collect();
                Some(Table::from_features(&feature_matrix(scene, &centers, &cfg.features)?))
            }
            None => None,
        };
        Ok(Self { cfg, dataset, features })
    }

    fn table(&self, rows: &[usize]) -> Result<Table> {
        self.features
            .as_ref()
            .map(|t| t.rows_subset(rows))
            .ok_or_else(|| Error::Config("feature-based models need the dataset scene".into()))
    }

    pub fn cnn_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.cfg.train.clone() }
    }

    pub fn train_cnn(&self, rows: &[usize], images: Option<&[TileImage]>, seed: u64) -> Result<TrainedModel> {
        let y = self.dataset.targets(rows);
        let owned;
        let images = match images {
            Some(i) => i,
            None => {
                owned = self.dataset.images(rows);
                &owned
            }
        };
        Ok(train(&self.cfg.model_spec_for(images)?, images, &y, &self.cnn_config(seed))?)
    }

    /// Fits `kind` on `train_rows` and predicts `eval_rows`. `images`
    /// replaces the dataset tiles for both sets when given (one per sample).
    pub fn fit_predict(
        &self,
        kind: ModelKind,
        train_rows: &[usize],
        eval_rows: &[usize],
        images: Option<&[TileImage]>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let y = self.dataset.targets(train_rows);
        match kind {
            ModelKind::Mean => Ok(MeanModel::fit(&y)?.predict_many(eval_rows.len())),
            ModelKind::Linear => Ok(stepwise_linear(&self.table(train_rows)?, &y)?.predict(&self.table(eval_rows)?)?),
            ModelKind::RandomForest => {
                let b = rf_build(&self.table(train_rows)?, &y, seed, &self.cfg.rf)?;
                Ok(b.forest.predict(&self.table(eval_rows)?)?)
            }
            ModelKind::Mlp => {
                let b = mlp_build(&self.table(train_rows)?, &y, seed, &self.cfg.mlp)?;
                Ok(b.model.predict(&self.table(eval_rows)?)?)
            }
            ModelKind::Cnn => {
                let pick = |rows: &[usize]| -> Vec<TileImage> {
                    match images {
                        Some(all) => rows.iter().map(|&i| all[i].clone()).collect(),
                        None => self.dataset.images(rows),
                    }
                };
                let model = self.train_cnn(train_rows, Some(&pick(train_rows)), seed)?;
                Ok(predict_batch(&model, &pick(eval_rows))?)
            }
        }
    }
}

impl ExperimentConfig {
    /// Model spec matching the extent and channels of `images`.
    pub fn model_spec_for(&self, images: &[TileImage]) -> Result<maplur_core::model::MapLurSpec> {
        let spec = self.model_spec()?;
        match images.first() {
            Some(img) if img.channels() != spec.in_channels || img.height() != spec.input_px => {
                Ok(maplur_core::model::MapLurSpec::build(img.channels())?.with_input_px(img.height())?)
            }
            _ => Ok(spec),
        }
    }
}
