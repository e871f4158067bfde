//! Synthetic city scenes: vector geometry, palette rasterization, a
//! ground-truth pollution oracle and artificial probe tiles.

mod city;
pub mod geometry;
mod image;
mod oracle;
mod palette;
mod probe;
mod raster;

pub use city::{generate_city, intersections, CityConfig};
pub use geometry::Point;
pub use image::{ChannelSemantics, TileImage};
pub use oracle::{oracle_concentration, OracleParams, RoadWeights, ORACLE_CUTOFF_DECAYS, ORACLE_STEP_M};
pub use palette::{Palette, Rgb};
pub use probe::{artificial_tile, Axis, Entity, ProbeSpec, RoadOverlay};
pub use raster::{rasterize, synth_satellite, SATELLITE_NOISE_SD, SUPERSAMPLE};

use crate::error::{invalid, Result};
use crate::prelude::*;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        #[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl core::str::FromStr for $name {
            type Err = crate::Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(invalid(format!(concat!("unknown ", stringify!($name), " `{}`"), s))),
                }
            }
        }

        impl core::fmt::Display for $name {
            fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(
    /// Road classes, ordered from least to most prominent; rendering draws
    /// later classes on top.
    RoadClass {
        Footpath => "footpath",
        Local => "local",
        Secondary => "secondary",
        Primary => "primary",
        Trunk => "trunk",
        Motorway => "motorway",
    }
);

impl RoadClass {
    /// Motorway, trunk, primary and secondary roads.
    pub fn is_big(self) -> bool {
        matches!(self, RoadClass::Motorway | RoadClass::Trunk | RoadClass::Primary | RoadClass::Secondary)
    }

    /// Rendered carriageway width in meters.
    pub fn default_width_m(self) -> f64 {
        match self {
            RoadClass::Motorway => 16.0,
            RoadClass::Trunk => 13.0,
            RoadClass::Primary => 11.0,
            RoadClass::Secondary => 9.0,
            RoadClass::Local => 6.0,
            RoadClass::Footpath => 2.5,
        }
    }
}

named_enum!(
    LandUseClass {
        Industrial => "industrial",
        Residential => "residential",
        Commercial => "commercial",
        Park => "park",
        Forest => "forest",
        Water => "water",
        Neutral => "neutral",
    }
);

named_enum!(
    PointKind {
        TrafficSignal => "traffic_signal",
        IndustrialPremiseAnchor => "industrial_premise_anchor",
    }
);

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Road {
    pub path: Vec<Point>,
    pub class: RoadClass,
    pub width_m: f64,
}

impl Road {
    pub fn new(path: Vec<Point>, class: RoadClass) -> Self {
        Self { path, class, width_m: class.default_width_m() }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Zone {
    pub polygon: Vec<Point>,
    pub class: LandUseClass,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointFeature {
    pub position: Point,
    pub kind: PointKind,
}

/// Vector description of a city in a locally metric frame. Zones are painted
/// in list order over the background; roads are painted over zones.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scene {
    pub roads: Vec<Road>,
    pub zones: Vec<Zone>,
    pub points: Vec<PointFeature>,
    pub background: LandUseClass,
    /// Latitude of the frame origin, for Mercator scale.
    pub lat_deg: f64,
}

impl Scene {
    pub fn empty(background: LandUseClass, lat_deg: f64) -> Self {
        Self { roads: Vec::new(), zones: Vec::new(), points: Vec::new(), background, lat_deg }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.roads.iter().enumerate() {
            if r.path.len() < 2 {
                return Err(invalid(format!("road {i} has fewer than two vertices")));
            }
            if !(r.width_m > 0.0 && r.width_m.is_finite()) {
                return Err(invalid(format!("road {i} has non-positive width")));
            }
            if r.path.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid(format!("road {i} has non-finite coordinates")));
            }
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.polygon.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid(format!("zone {i} has non-finite coordinates")));
            }
            if !geometry::is_simple(&z.polygon) {
                return Err(invalid(format!("zone {i} is not a simple polygon")));
            }
        }
        if self.points.iter().any(|p| !p.position.iter().all(|v| v.is_finite())) {
            return Err(invalid("point feature with non-finite coordinates"));
        }
        Ok(())
    }

    /// Bounding box of all geometry, `None` for an empty scene.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let pts: Vec<Point> = self
            .roads
            .iter()
            .flat_map(|r| r.path.iter().copied())
            .chain(self.zones.iter().flat_map(|z| z.polygon.iter().copied()))
            .chain(self.points.iter().map(|p| p.position))
            .collect();
        (!pts.is_empty()).then(|| geometry::bbox(&pts))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |p: &Point| [p[0] + dx, p[1] + dy];
        Self {
            roads: self
                .roads
                .iter()
                .map(|r| Road { path: r.path.iter().map(shift).collect(), ..r.clone() })
                .collect(),
            zones: self
                .zones
                .iter()
                .map(|z| Zone { polygon: z.polygon.iter().map(shift).collect(), class: z.class })
                .collect(),
            points: self.points.iter().map(|p| PointFeature { position: shift(&p.position), kind: p.kind }).collect(),
            ..self.clone()
        }
    }
}

/// Axis-aligned box used to skip geometry that cannot touch a window.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn of(points: &[Point], pad: f64) -> Self {
        let (lo, hi) = geometry::bbox(points);
        Self { lo: [lo[0] - pad, lo[1] - pad], hi: [hi[0] + pad, hi[1] + pad] }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.lo[0] <= other.hi[0] && other.lo[0] <= self.hi[0] && self.lo[1] <= other.hi[1] && other.lo[1] <= self.hi[1]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.lo[0] && p[0] <= self.hi[0] && p[1] >= self.lo[1] && p[1] <= self.hi[1]
    }
}
