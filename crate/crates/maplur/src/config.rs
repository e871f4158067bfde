//! Experiment configuration: one JSON document with full defaulting, plus
//! `key.path=value` overrides.

use std::path::{Path, PathBuf};

use maplur_core::baselines::{MlpBuildConfig, RfBuildConfig};
use maplur_core::evalstat::{DEFAULT_AREA_SIDES_M, DEFAULT_FRACTIONS, DEFAULT_RUNS};
use maplur_core::features::FeatureConfig;
use maplur_core::model::{MapLurSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, IoContext, Result};
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Road overlay width for the entity table; scales with the tile size
    /// when absent.
    pub road_width_px: Option<usize>,
    pub area_widths_px: Vec<usize>,
    pub distance_width_px: usize,
    pub distance_offsets_px: Vec<i64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            road_width_px: None,
            area_widths_px: vec![0, 2, 4, 6, 8, 12, 16, 24, 32],
            distance_width_px: 4,
            distance_offsets_px: vec![0, 2, 4, 6, 8, 10, 12, 14, 16, 20, 24, 28],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Lattice cells per side.
    pub cells: usize,
    /// Lattice spacing in meters; defaults to the window side.
    pub spacing_m: Option<f64>,
    /// South-west lattice center; by default the lattice is centered on
    /// the city.
    pub origin_m: Option<[f64; 2]>,
    /// Color scale range in µg/m³.
    pub min_ugm3: f64,
    pub max_ugm3: f64,
    /// Output pixels per lattice cell.
    pub cell_px: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { cells: 10, spacing_m: None, origin_m: None, min_ugm3: 20.0, max_ugm3: 60.0, cell_px: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Dataset directory consumed by every command except `synth`;
    /// defaults to `<output_dir>/dataset`.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub rf: RfBuildConfig,
    pub mlp: MlpBuildConfig,
    pub runs: usize,
    /// Runs per data-size point for the CNN.
    pub cnn_sweep_runs: usize,
    pub fractions: Vec<f64>,
    pub area_sides_m: Vec<f64>,
    pub probe: ProbeConfig,
    pub map: MapConfig,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("maplur-out"),
            dataset: None,
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::desk(),
            rf: desk_rf(),
            mlp: desk_mlp(),
            runs: DEFAULT_RUNS,
            cnn_sweep_runs: maplur_core::evalstat::CNN_SWEEP_RUNS,
            fractions: DEFAULT_FRACTIONS.to_vec(),
            area_sides_m: DEFAULT_AREA_SIDES_M.to_vec(),
            probe: ProbeConfig::default(),
            map: MapConfig::default(),
            jobs: 1,
        }
    }
}

/// Forest build budget sized for a single workstation.
pub fn desk_rf() -> RfBuildConfig {
    RfBuildConfig { search_evals: 40, folds: 5, ..RfBuildConfig::default() }
}

/// Network build budget sized for a single workstation.
pub fn desk_mlp() -> MlpBuildConfig {
    let d = MlpBuildConfig::default();
    MlpBuildConfig { search_evals: 8, folds: 3, train: TrainConfig { max_epochs: 300, ..d.train } }
}

impl ExperimentConfig {
    /// Reads a config file (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).at(p)?;
            let file = serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            // A run record carries the config it ran with.
            let file = match file {
                Value::Object(mut o) if o.contains_key("command") && o.contains_key("config") => {
                    o.remove("config").unwrap_or_default()
                }
                other => other,
            };
            merge(&mut doc, file);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        self.model_spec()?;
        if self.runs == 0 || self.cnn_sweep_runs == 0 {
            return Err(Error::Config("run counts must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.map.cells == 0 || self.map.cell_px == 0 || !(self.map.max_ugm3 > self.map.min_ugm3) {
            return Err(Error::Config("map needs cells, cell_px > 0 and max_ugm3 > min_ugm3".into()));
        }
        if let Some(d) = &self.dataset {
            if !d.exists() {
                return Err(Error::Config(format!("dataset directory {} does not exist", d.display())));
            }
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.output_dir.join("dataset"))
    }

    /// The MapLUR topology at the configured tile size and channel count.
    pub fn model_spec(&self) -> Result<MapLurSpec> {
        Ok(MapLurSpec::build(self.synth.channels.count())?.with_input_px(self.synth.tile_px)?)
    }

    pub fn probe_road_width(&self) -> usize {
        self.probe.road_width_px.unwrap_or_else(|| maplur_core::interpret::default_road_width(self.synth.tile_px))
    }
}

/// Deep-merges `patch` into `doc`; objects merge key by key, anything else
/// replaces.
fn merge(doc: &mut Value, patch: Value) {
    match (doc, patch) {
        (Value::Object(d), Value::Object(p)) => {
            for (k, v) in p {
                merge(d.entry(k).or_insert(Value::Null), v);
            }
        }
        (d, p) => *d = p,
    }
}

/// Sets `a.b.c=value` in a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty key segment in `{key}`")));
        }
        let obj = match node {
            Value::Object(m) => m,
            v @ Value::Null => {
                *v = Value::Object(Default::default());
                v.as_object_mut().expect("just set")
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a non-object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}
