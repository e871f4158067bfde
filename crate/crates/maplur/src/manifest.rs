//! On-disk datasets: `samples.csv`, one PNG per sample under `images/`,
//! `metadata.json` and the generating `scene.json`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use maplur_core::scene::{ChannelSemantics, Scene, TileImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::io::{self, ColumnType};
use crate::synth::{Channels, Dataset, Sample, Split, SynthConfig};

pub const SAMPLES_CSV: &str = "samples.csv";
pub const METADATA_JSON: &str = "metadata.json";
pub const SCENE_JSON: &str = "scene.json";
pub const IMAGE_DIR: &str = "images";
pub const FORMAT_VERSION: u32 = 1;

pub const SAMPLES_SCHEMA: &[(&str, ColumnType)] = &[
    ("id", ColumnType::Text),
    ("x_m", ColumnType::Real),
    ("y_m", ColumnType::Real),
    ("target_ugm3", ColumnType::Real),
    ("split", ColumnType::Text),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: u32,
    /// Hex fingerprint of the rendering palette.
    pub palette_hash: String,
    pub side_m: f64,
    pub zoom: u8,
    pub lat_deg: f64,
    pub tile_px: usize,
    pub channels: Channels,
    pub semantics: ChannelSemantics,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Metadata {
    pub fn new(cfg: &SynthConfig, seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            palette_hash: format!("{:016x}", cfg.palette.fingerprint()),
            side_m: cfg.side_m,
            zoom: cfg.zoom,
            lat_deg: cfg.city.lat_deg,
            tile_px: cfg.tile_px,
            channels: cfg.channels,
            semantics: match cfg.channels {
                Channels::Map => ChannelSemantics::Map,
                Channels::MapSatellite => ChannelSemantics::MapSatellite,
            },
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            seed,
        }
    }
}

/// A dataset directory loaded into memory.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub dir: PathBuf,
    pub metadata: Metadata,
    pub dataset: Dataset,
}

impl Manifest {
    pub fn scene(&self) -> Result<Scene> {
        io::read_json(&self.dir.join(SCENE_JSON))
    }
}

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(IMAGE_DIR).join(format!("{id}.png"))
}

pub fn satellite_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(IMAGE_DIR).join(format!("{id}.sat.png"))
}

/// Splits a tile into its PNG-encodable three-channel parts.
fn parts(tile: &TileImage) -> Result<Vec<TileImage>> {
    if tile.channels() == 3 {
        return Ok(vec![tile.clone()]);
    }
    let plane = tile.height() * tile.width();
    let d = tile.data();
    let half = |s: usize, sem| TileImage::new(tile.height(), tile.width(), sem, d[s..s + 3 * plane].to_vec());
    Ok(vec![half(0, ChannelSemantics::Map)?, half(3 * plane, ChannelSemantics::SatelliteLike)?])
}

/// Writes a dataset directory. Images are written first and the CSV last,
/// so a complete `samples.csv` implies every image is in place.
pub fn write(dir: &Path, metadata: &Metadata, scene: &Scene, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGE_DIR)).at(dir.join(IMAGE_DIR))?;
    dataset.samples.par_iter().zip(&dataset.images).try_for_each(|(s, img)| -> Result<()> {
        let p = parts(img)?;
        io::write_atomic(&image_path(dir, &s.id), &io::tile_png(&p[0])?)?;
        if let Some(sat) = p.get(1) {
            io::write_atomic(&satellite_path(dir, &s.id), &io::tile_png(sat)?)?;
        }
        Ok(())
    })?;
    io::write_json(&dir.join(SCENE_JSON), scene)?;
    io::write_json(&dir.join(METADATA_JSON), metadata)?;
    io::write_csv(&dir.join(SAMPLES_CSV), &dataset.samples)
}

/// Loads and validates a dataset directory: schema-valid CSV, unique ids,
/// finite positive targets, one image per id, homogeneous image shapes.
pub fn read(dir: &Path) -> Result<Manifest> {
    let csv_path = dir.join(SAMPLES_CSV);
    if !csv_path.exists() {
        return Err(Error::data(&csv_path, "dataset manifest not found"));
    }
    io::check_csv_schema(&csv_path, SAMPLES_SCHEMA)?;
    let samples: Vec<Sample> = io::read_csv(&csv_path)?;
    let metadata: Metadata = io::read_json(&dir.join(METADATA_JSON))?;
    let mut seen = HashSet::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::data(&csv_path, format!("duplicate id `{}`", s.id)));
        }
        if !(s.target_ugm3.is_finite() && s.target_ugm3 > 0.0) {
            return Err(Error::data(&csv_path, format!("sample `{}` has non-positive target {}", s.id, s.target_ugm3)));
        }
    }
    let images = samples
        .par_iter()
        .map(|s| {
            let map = io::read_png(&image_path(dir, &s.id), ChannelSemantics::Map)?;
            let tile = match metadata.channels {
                Channels::Map => map,
                Channels::MapSatellite => {
                    let sat = io::read_png(&satellite_path(dir, &s.id), ChannelSemantics::SatelliteLike)?;
                    TileImage::stack(&map, &sat)?
                }
            };
            if tile.height() != metadata.tile_px || tile.width() != metadata.tile_px {
                return Err(Error::data(
                    image_path(dir, &s.id),
                    format!("{}x{} image, dataset tiles are {} px", tile.width(), tile.height(), metadata.tile_px),
                ));
            }
            Ok(tile)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest { dir: dir.to_path_buf(), metadata, dataset: Dataset { samples, images } })
}

/// Sample ids in a split, in CSV order.
pub fn split_ids(m: &Manifest, split: Split) -> Vec<String> {
    m.dataset.indices(split).into_iter().map(|i| m.dataset.samples[i].id.clone()).collect()
}
