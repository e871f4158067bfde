//! Atomic file output, PNG and CSV helpers, and the CSV schema check.

use std::fs;
use std::io::Write;
use std::path::Path;

use maplur_core::scene::{ChannelSemantics, TileImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, IoContext, Result};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::data(path, "not a file path"))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).at(&tmp)?;
    f.write_all(bytes).at(&tmp)?;
    f.sync_all().at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::data(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(path, e))
}

/// Serializes rows (header from the first row's field names) and writes
/// them atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::data(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(path, e))?;
    write_atomic(path, &bytes)
}

/// Writes a headed CSV from raw string records.
pub fn write_csv_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::data(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::data(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::data(path, e))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Integer,
    /// A finite floating-point number.
    Real,
}

/// Checks a CSV file against `(column name, type)` pairs: exact header
/// match, every field parses, every real is finite.
pub fn check_csv_schema(path: &Path, schema: &[(&str, ColumnType)]) -> Result<usize> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(path, e))?;
    let header = r.headers().map_err(|e| Error::data(path, e))?.clone();
    let names: Vec<&str> = schema.iter().map(|s| s.0).collect();
    if header.iter().collect::<Vec<_>>() != names {
        return Err(Error::data(path, format!("header {:?}, expected {:?}", header.iter().collect::<Vec<_>>(), names)));
    }
    let mut rows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, e))?;
        for ((name, ty), field) in schema.iter().zip(rec.iter()) {
            let ok = match ty {
                ColumnType::Text => true,
                ColumnType::Integer => field.parse::<i128>().is_ok(),
                ColumnType::Real => field.parse::<f64>().is_ok_and(f64::is_finite),
            };
            if !ok {
                return Err(Error::data(path, format!("row {}: column `{name}` value `{field}` is not {ty:?}", line + 1)));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

pub fn encode_png_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(rgb, width as u32, height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Fetch(format!("png encoding: {e}")))?;
    Ok(out)
}

pub fn encode_png_gray(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(gray, width as u32, height as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Fetch(format!("png encoding: {e}")))?;
    Ok(out)
}

use image::ImageEncoder as _;

/// Decodes a PNG into a three-channel tile with the given semantics.
pub fn decode_png(bytes: &[u8], semantics: ChannelSemantics, origin: &Path) -> Result<TileImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::data(origin, format!("PNG decode: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(TileImage::from_interleaved_u8(h as usize, w as usize, semantics, img.as_raw())?)
}

pub fn read_png(path: &Path, semantics: ChannelSemantics) -> Result<TileImage> {
    let bytes = fs::read(path).at(path)?;
    decode_png(&bytes, semantics, path)
}

pub fn tile_png(tile: &TileImage) -> Result<Vec<u8>> {
    if tile.channels() != 3 {
        return Err(Error::Config(format!("cannot encode a {}-channel tile as RGB", tile.channels())));
    }
    encode_png_rgb(tile.width(), tile.height(), &tile.to_interleaved_u8())
}
