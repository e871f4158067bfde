//! Hand-crafted baseline features: land-use areas and street lengths inside
//! circular buffers, and distances to the nearest entity of a kind.
//!
//! Areas are computed analytically by clipping each polygon against the
//! buffer disk. Street lengths use road centerlines.

use crate::error::{invalid, Result};
use crate::prelude::*;
use crate::scene::geometry::{cross, dist, dot, polygon_dist, polyline_dist, segment_length_in_disk, sub, Point};
use crate::scene::{LandUseClass, PointKind, RoadClass, Scene};

/// Buffer radii in meters.
pub const BUFFER_RADII_M: [f64; 2] = [50.0, 100.0];

/// Distance reported when no entity of the requested kind exists.
pub const DEFAULT_MAX_DISTANCE_M: f64 = 10_000.0;

pub const FEATURE_COUNT: usize = 14;

/// CSV column order of [`FeatureVector::values`].
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "area_industrial_50",
    "area_industrial_100",
    "area_commercial_50",
    "area_commercial_100",
    "area_residential_50",
    "area_residential_100",
    "length_big_50",
    "length_big_100",
    "length_local_50",
    "length_local_100",
    "dist_traffic_signal",
    "dist_motorway",
    "dist_primary_road",
    "dist_industrial_premise",
];

const AREA_CLASSES: [LandUseClass; 3] = [LandUseClass::Industrial, LandUseClass::Commercial, LandUseClass::Residential];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StreetSet {
    /// Motorway, trunk, primary and secondary roads.
    Big,
    /// Local streets. Footpaths are pedestrian ways, not streets, and belong
    /// to neither set.
    Local,
}

impl StreetSet {
    pub fn contains(self, class: RoadClass) -> bool {
        match self {
            StreetSet::Big => class.is_big(),
            StreetSet::Local => class == RoadClass::Local,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NearestKind {
    TrafficSignal,
    Motorway,
    PrimaryRoad,
    /// Industrial zones; zero inside one.
    IndustrialPremise,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FeatureConfig {
    pub max_distance_m: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { max_distance_m: DEFAULT_MAX_DISTANCE_M }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_distance_m > 0.0 && self.max_distance_m.is_finite()) {
            return Err(invalid("distance cap must be positive and finite"));
        }
        Ok(())
    }
}

/// The 14 baseline features of one location, in [`FEATURE_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// Signed area of `triangle(0, a, b) ∩ disk(0, r)`.
fn triangle_disk_area(a: Point, b: Point, r: f64) -> f64 {
    let d = sub(b, a);
    let qa = dot(d, d);
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * dot(a, d);
    let qc = dot(a, a) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    let mut cuts = [0.0, 1.0, 1.0, 1.0];
    let mut n = 1;
    if disc > 0.0 {
        let sq = libm::sqrt(disc);
        for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
            if t > 0.0 && t < 1.0 {
                cuts[n] = t;
                n += 1;
            }
        }
    }
    cuts[n] = 1.0;
    let at = |t: f64| [a[0] + t * d[0], a[1] + t * d[1]];
    let mut area = 0.0;
    for w in cuts[..=n].windows(2) {
        let (p, q) = (at(w[0]), at(w[1]));
        let m = at((w[0] + w[1]) / 2.0);
        area += if dot(m, m) <= r * r {
            cross(p, q) / 2.0
        } else {
            r * r * libm::atan2(cross(p, q), dot(p, q)) / 2.0
        };
    }
    area
}

/// Area of a simple polygon inside the disk `(center, r)`, exact up to
/// rounding.
pub fn polygon_disk_area(poly: &[Point], center: Point, r: f64) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let total: f64 =
        (0..n).map(|i| triangle_disk_area(sub(poly[i], center), sub(poly[(i + 1) % n], center), r)).sum();
    total.abs()
}

fn disk_may_touch(poly: &[Point], center: Point, r: f64) -> bool {
    poly.iter().any(|p| p[0] >= center[0] - r)
        && poly.iter().any(|p| p[0] <= center[0] + r)
        && poly.iter().any(|p| p[1] >= center[1] - r)
        && poly.iter().any(|p| p[1] <= center[1] + r)
}

/// Area in m² of zones of `class` within `r` of `center`. Zones of one class
/// are assumed not to overlap each other.
pub fn buffer_area(scene: &Scene, center: Point, class: LandUseClass, r: f64) -> Result<f64> {
    check_radius(r)?;
    let area = scene
        .zones
        .iter()
        .filter(|z| z.class == class && disk_may_touch(&z.polygon, center, r))
        .map(|z| polygon_disk_area(&z.polygon, center, r))
        .sum::<f64>();
    Ok(area.min(core::f64::consts::PI * r * r))
}

/// Centerline length in meters of roads in `set` within `r` of `center`.
pub fn buffer_length(scene: &Scene, center: Point, set: StreetSet, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(scene
        .roads
        .iter()
        .filter(|road| set.contains(road.class))
        .flat_map(|road| road.path.windows(2))
        .map(|s| segment_length_in_disk(s[0], s[1], center, r))
        .sum())
}

/// Distance in meters to the nearest entity of `kind`, capped at
/// `max_distance_m` (also returned when none exists).
pub fn nearest_distance(scene: &Scene, center: Point, kind: NearestKind, max_distance_m: f64) -> f64 {
    let roads = |class: RoadClass| {
        scene
            .roads
            .iter()
            .filter(move |r| r.class == class)
            .map(move |r| polyline_dist(center, &r.path))
            .fold(f64::INFINITY, f64::min)
    };
    let d = match kind {
        NearestKind::TrafficSignal => scene
            .points
            .iter()
            .filter(|p| p.kind == PointKind::TrafficSignal)
            .map(|p| dist(center, p.position))
            .fold(f64::INFINITY, f64::min),
        NearestKind::Motorway => roads(RoadClass::Motorway),
        NearestKind::PrimaryRoad => roads(RoadClass::Primary),
        NearestKind::IndustrialPremise => scene
            .zones
            .iter()
            .filter(|z| z.class == LandUseClass::Industrial)
            .map(|z| polygon_dist(center, &z.polygon))
            .fold(f64::INFINITY, f64::min),
    };
    d.min(max_distance_m)
}

pub fn feature_vector(scene: &Scene, center: Point, cfg: &FeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let mut values = [0.0; FEATURE_COUNT];
    let mut k = 0;
    for class in AREA_CLASSES {
        for r in BUFFER_RADII_M {
            values[k] = buffer_area(scene, center, class, r)?;
            k += 1;
        }
    }
    for set in [StreetSet::Big, StreetSet::Local] {
        for r in BUFFER_RADII_M {
            values[k] = buffer_length(scene, center, set, r)?;
            k += 1;
        }
    }
    for kind in [NearestKind::TrafficSignal, NearestKind::Motorway, NearestKind::PrimaryRoad, NearestKind::IndustrialPremise]
    {
        values[k] = nearest_distance(scene, center, kind, cfg.max_distance_m);
        k += 1;
    }
    Ok(FeatureVector { values })
}

/// Row-major `n × 14` matrix of feature vectors.
pub fn feature_matrix(scene: &Scene, centers: &[Point], cfg: &FeatureConfig) -> Result<Vec<FeatureVector>> {
    centers.iter().map(|&c| feature_vector(scene, c, cfg)).collect()
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("buffer radius {r} must be positive")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn square_inside_disk_keeps_its_area() {
        let sq = [[-10.0, -10.0], [10.0, -10.0], [10.0, 10.0], [-10.0, 10.0]];
        assert!((polygon_disk_area(&sq, [0.0, 0.0], 50.0) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn disk_inside_square_is_full_circle() {
        let sq = [[-100.0, -100.0], [100.0, -100.0], [100.0, 100.0], [-100.0, 100.0]];
        assert!((polygon_disk_area(&sq, [3.0, -4.0], 50.0) - PI * 2500.0).abs() < 1e-9);
    }

    #[test]
    fn orientation_does_not_matter() {
        let ccw = [[0.0, 0.0], [80.0, 0.0], [80.0, 30.0], [0.0, 30.0]];
        let mut cw = ccw;
        cw.reverse();
        let a = polygon_disk_area(&ccw, [10.0, 5.0], 40.0);
        assert!((a - polygon_disk_area(&cw, [10.0, 5.0], 40.0)).abs() < 1e-9);
        assert!(a > 0.0 && a < 2400.0);
    }

    #[test]
    fn rejects_bad_radius() {
        let s = Scene::empty(LandUseClass::Neutral, 51.5);
        assert!(buffer_area(&s, [0.0, 0.0], LandUseClass::Park, 0.0).is_err());
        assert!(buffer_length(&s, [0.0, 0.0], StreetSet::Big, f64::NAN).is_err());
    }
}
