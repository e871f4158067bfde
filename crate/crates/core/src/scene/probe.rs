use crate::error::{invalid, Result};
use crate::prelude::*;

use super::{ChannelSemantics, LandUseClass, Palette, RoadClass, TileImage};

/// What fills an artificial tile: a land use, or a road class covering the
/// whole tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Entity {
    LandUse(LandUseClass),
    Road(RoadClass),
}

impl Entity {
    pub fn color(self, palette: &Palette) -> super::Rgb {
        match self {
            Entity::LandUse(c) => palette.land_use(c),
            Entity::Road(c) => palette.road(c),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Entity::LandUse(c) => c.name(),
            Entity::Road(c) => c.name(),
        }
    }
}

/// Direction the overlaid road runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Axis {
    /// Spans all columns; occupies a band of rows.
    Horizontal,
    /// Spans all rows; occupies a band of columns.
    Vertical,
}

/// A straight full-span road. The band starts at `floor((px − width) / 2) +
/// offset`, so positive offsets move it right (vertical) or down
/// (horizontal). A width of zero draws nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoadOverlay {
    pub class: RoadClass,
    pub width_px: usize,
    pub axis: Axis,
    pub offset_px: i64,
}

impl RoadOverlay {
    /// Half-open pixel band `[lo, hi)` clipped to the image, `None` when empty.
    pub fn band(&self, px: usize) -> Option<(usize, usize)> {
        if self.width_px == 0 {
            return None;
        }
        let start = (px as i64 - self.width_px as i64).div_euclid(2) + self.offset_px;
        let end = start + self.width_px as i64;
        let lo = start.clamp(0, px as i64) as usize;
        let hi = end.clamp(0, px as i64) as usize;
        (hi > lo).then_some((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeSpec {
    pub base: Entity,
    pub road: Option<RoadOverlay>,
    pub px: usize,
}

impl ProbeSpec {
    pub fn uniform(base: Entity, px: usize) -> Self {
        Self { base, road: None, px }
    }

    pub fn with_road(base: Entity, road: RoadOverlay, px: usize) -> Self {
        Self { base, road: Some(road), px }
    }
}

/// Renders a probe tile: a constant entity color, optionally crossed by one
/// axis-aligned road band of exact pixel width.
pub fn artificial_tile(spec: &ProbeSpec, palette: &Palette) -> Result<TileImage> {
    let px = spec.px;
    if px == 0 {
        return Err(invalid("probe tile size must be positive"));
    }
    let mut img = TileImage::filled(px, px, spec.base.color(palette));
    if let Some(road) = spec.road {
        if road.width_px == 0 {
            return Ok(img);
        }
        let (lo, hi) = road
            .band(px)
            .ok_or_else(|| invalid(format!("road at offset {} px lies outside the {px} px tile", road.offset_px)))?;
        let color = palette.road(road.class);
        for c in 0..3 {
            let plane = img.channel_mut(c);
            for i in 0..px {
                let row = &mut plane[i * px..(i + 1) * px];
                match road.axis {
                    Axis::Vertical => row[lo..hi].fill(color[c]),
                    Axis::Horizontal if (lo..hi).contains(&i) => row.fill(color[c]),
                    Axis::Horizontal => {}
                }
            }
        }
    }
    debug_assert_eq!(img.semantics(), ChannelSemantics::Map);
    Ok(img)
}
