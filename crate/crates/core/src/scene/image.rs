use crate::error::{invalid, Result};
use crate::prelude::*;

/// What the channels of a [`TileImage`] depict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum ChannelSemantics {
    Map,
    SatelliteLike,
    MapSatellite,
}

/// Planar (`C×H×W`) raster with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TileImage {
    height: usize,
    width: usize,
    channels: usize,
    semantics: ChannelSemantics,
    data: Vec<f32>,
}

impl TileImage {
    pub fn new(height: usize, width: usize, semantics: ChannelSemantics, data: Vec<f32>) -> Result<Self> {
        let channels = match semantics {
            ChannelSemantics::MapSatellite => 6,
            _ => 3,
        };
        if height == 0 || width == 0 {
            return Err(invalid("image extents must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(invalid(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, semantics, data })
    }

    /// A constant-color three-channel map image.
    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in rgb {
            data.extend(core::iter::repeat(c.clamp(0.0, 1.0)).take(height * width));
        }
        Self { height, width, channels: 3, semantics: ChannelSemantics::Map, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn semantics(&self) -> ChannelSemantics {
        self.semantics
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn pixel(&self, y: usize, x: usize) -> Vec<f32> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    /// Mutable plane of channel `c`; callers keep values in `[0, 1]`.
    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// Stacks a map and a satellite-like image into one six-channel tensor.
    pub fn stack(map: &TileImage, satellite: &TileImage) -> Result<Self> {
        if map.channels != 3 || satellite.channels != 3 {
            return Err(invalid("stacking needs two three-channel images"));
        }
        if (map.height, map.width) != (satellite.height, satellite.width) {
            return Err(invalid("stacked images must share extents"));
        }
        let mut data = map.data.clone();
        data.extend_from_slice(&satellite.data);
        Ok(Self { height: map.height, width: map.width, channels: 6, semantics: ChannelSemantics::MapSatellite, data })
    }

    /// Interleaved (`H×W×C`) bytes, 8 bits per channel.
    pub fn to_interleaved_u8(&self) -> Vec<u8> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(plane * self.channels);
        for i in 0..plane {
            for c in 0..self.channels {
                out.push(libm::roundf(self.data[c * plane + i] * 255.0) as u8);
            }
        }
        out
    }

    pub fn from_interleaved_u8(height: usize, width: usize, semantics: ChannelSemantics, bytes: &[u8]) -> Result<Self> {
        let channels = if semantics == ChannelSemantics::MapSatellite { 6 } else { 3 };
        let plane = height * width;
        if bytes.len() != plane * channels {
            return Err(invalid("interleaved buffer size does not match extents"));
        }
        let mut data = vec![0.0f32; plane * channels];
        for (i, px) in bytes.chunks_exact(channels).enumerate() {
            for (c, &b) in px.iter().enumerate() {
                data[c * plane + i] = b as f32 / 255.0;
            }
        }
        Self::new(height, width, semantics, data)
    }

    /// Nearest-neighbour resampling to `px × px`.
    pub fn resized(&self, px: usize) -> Self {
        let mut data = vec![0.0f32; self.channels * px * px];
        for c in 0..self.channels {
            for y in 0..px {
                let sy = (y * self.height) / px;
                for x in 0..px {
                    let sx = (x * self.width) / px;
                    data[(c * px + y) * px + x] = self.get(c, sy, sx);
                }
            }
        }
        Self { height: px, width: px, channels: self.channels, semantics: self.semantics, data }
    }
}
