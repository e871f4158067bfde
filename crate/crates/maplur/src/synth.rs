//! In-memory synthetic datasets: a generated city, non-overlapping sample
//! windows, rendered tiles and oracle targets.

use maplur_core::geo::{sample_nonoverlapping, BBox, GeoPoint, GeoWindow};
use maplur_core::rng::{derive, derived};
use maplur_core::scene::{
    generate_city, oracle_concentration, rasterize, synth_satellite, CityConfig, OracleParams, Palette, Scene,
    TileImage, SATELLITE_NOISE_SD,
};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rasters make up a tile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channels {
    #[default]
    Map,
    /// Map tile stacked over a satellite-like rendering (6 channels).
    MapSatellite,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Map => 3,
            Channels::MapSatellite => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub city: CityConfig,
    pub oracle: OracleParams,
    pub palette: Palette,
    pub side_m: f64,
    pub zoom: u8,
    pub tile_px: usize,
    pub channels: Channels,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            city: CityConfig::default(),
            oracle: OracleParams::default(),
            palette: Palette::default(),
            side_m: 80.0,
            zoom: 17,
            tile_px: 64,
            channels: Channels::Map,
            n_train: 3000,
            n_test: 1500,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.city.validate()?;
        self.oracle.validate()?;
        self.palette.validate()?;
        if self.n_train + self.n_test == 0 {
            return Err(Error::Config("dataset needs at least one sample".into()));
        }
        if self.tile_px < 8 {
            return Err(Error::Config(format!("tile size {} px below 8", self.tile_px)));
        }
        if !(self.side_m > 0.0 && 2.0 * self.side_m < self.city.width_m.min(self.city.height_m)) {
            return Err(Error::Config(format!("window side {} m does not fit the city", self.side_m)));
        }
        Ok(())
    }

    /// Region in which window centers may lie: the city inset by half a window.
    pub fn placement_box(&self) -> Result<BBox> {
        let h = self.side_m / 2.0;
        Ok(BBox::new(h, h, self.city.width_m - h, self.city.height_m - h)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub target_ugm3: f64,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub images: Vec<TileImage>,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    pub fn targets(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.samples[i].target_ugm3).collect()
    }

    pub fn images(&self, idx: &[usize]) -> Vec<TileImage> {
        idx.iter().map(|&i| self.images[i].clone()).collect()
    }
}

pub fn city(cfg: &SynthConfig, seed: u64) -> Result<Scene> {
    Ok(generate_city(&cfg.city, derive(seed, 1))?)
}

/// Renders the tile of the window centered on `center`.
pub fn render_tile(scene: &Scene, cfg: &SynthConfig, center: &GeoPoint, noise_seed: u64) -> Result<TileImage> {
    let window = GeoWindow::new(center.clone(), cfg.side_m, cfg.zoom)?;
    let map = rasterize(scene, &window, cfg.tile_px, &cfg.palette)?;
    Ok(match cfg.channels {
        Channels::Map => map,
        Channels::MapSatellite => {
            let sat = synth_satellite(scene, &window, cfg.tile_px, &cfg.palette, noise_seed, SATELLITE_NOISE_SD)?;
            TileImage::stack(&map, &sat)?
        }
    })
}

/// Places `n_train + n_test` windows, renders them and evaluates the oracle
/// at each center. Sample ids follow placement order; the train/test
/// assignment is a seeded shuffle.
pub fn synthesize(cfg: &SynthConfig, scene: &Scene, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_train + cfg.n_test;
    let centers = sample_nonoverlapping(&cfg.placement_box()?, n, cfg.side_m, cfg.city.lat_deg, derive(seed, 2))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived(seed, 3));
    let mut split = vec![Split::Test; n];
    for &i in &order[..cfg.n_train] {
        split[i] = Split::Train;
    }
    let width = n.to_string().len().max(5);
    let rendered: Vec<(Sample, TileImage)> = centers
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let image = render_tile(scene, cfg, c, derive(seed, 0x5A7_0000 + i as u64))?;
            let sample = Sample {
                id: format!("s{i:0width$}"),
                x_m: c.x_m,
                y_m: c.y_m,
                target_ugm3: oracle_concentration(scene, c.xy(), &cfg.oracle),
                split: split[i],
            };
            Ok((sample, image))
        })
        .collect::<Result<_>>()?;
    let (samples, images) = rendered.into_iter().unzip();
    Ok(Dataset { samples, images })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

/// Count, mean, sample standard deviation and range.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_dev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        count: values.len(),
        mean,
        std_dev,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
