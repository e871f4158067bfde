//! Web-Mercator ground resolution, slippy-map addressing and non-overlapping
//! placement of square image windows.

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::prelude::*;
use crate::rng::seeded;

/// Equatorial circumference of the WGS84 ellipsoid in meters.
pub const EARTH_CIRCUMFERENCE_M: f64 = 40_075_016.686;

/// Latitude bound of the square Web-Mercator world.
pub const MAX_LATITUDE: f64 = 85.0511;

pub const MAX_ZOOM: u8 = 22;

/// Proposal lattice spacing used by [`sample_nonoverlapping`], in meters.
pub const PLACEMENT_GRID_M: f64 = 20.0;

/// Attempts allowed per requested point in [`sample_nonoverlapping`].
pub const PLACEMENT_BUDGET_PER_POINT: usize = 1000;

fn check_latitude(lat_deg: f64) -> Result<()> {
    if lat_deg.is_finite() && lat_deg.abs() <= MAX_LATITUDE {
        Ok(())
    } else {
        Err(invalid(format!("latitude {lat_deg} outside ±{MAX_LATITUDE}")))
    }
}

/// A location in a locally metric planar frame, carrying the latitude needed
/// for Mercator scale.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub lat_deg: f64,
    pub crs_tag: String,
}

impl GeoPoint {
    pub const DEFAULT_CRS: &'static str = "local";

    pub fn new(x_m: f64, y_m: f64, lat_deg: f64) -> Result<Self> {
        Self::with_crs(x_m, y_m, lat_deg, Self::DEFAULT_CRS)
    }

    pub fn with_crs(x_m: f64, y_m: f64, lat_deg: f64, crs_tag: &str) -> Result<Self> {
        if !x_m.is_finite() || !y_m.is_finite() {
            return Err(invalid("point coordinates must be finite"));
        }
        check_latitude(lat_deg)?;
        Ok(Self { x_m, y_m, lat_deg, crs_tag: crs_tag.to_string() })
    }

    /// Planar coordinates, the form scene geometry uses.
    pub fn xy(&self) -> [f64; 2] {
        [self.x_m, self.y_m]
    }

    pub fn chebyshev(&self, other: &GeoPoint) -> f64 {
        (self.x_m - other.x_m).abs().max((self.y_m - other.y_m).abs())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x_m: self.x_m + dx, y_m: self.y_m + dy, ..self.clone() }
    }
}

/// Axis-aligned square window centered on a point.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoWindow {
    pub center: GeoPoint,
    pub side_m: f64,
    pub zoom: u8,
}

impl GeoWindow {
    pub fn new(center: GeoPoint, side_m: f64, zoom: u8) -> Result<Self> {
        let w = Self { center, side_m, zoom };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(invalid(format!("window side {} must be positive", self.side_m)));
        }
        if self.zoom > MAX_ZOOM {
            return Err(invalid(format!("zoom {} above {MAX_ZOOM}", self.zoom)));
        }
        check_latitude(self.center.lat_deg)
    }

    /// `(min_x, min_y, max_x, max_y)` in meters.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let h = self.side_m / 2.0;
        (self.center.x_m - h, self.center.y_m - h, self.center.x_m + h, self.center.y_m + h)
    }
}

/// Slippy-map tile address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileIndex {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

impl TileIndex {
    pub fn new(z: u8, x: u32, y: u32) -> Result<Self> {
        if z > MAX_ZOOM {
            return Err(invalid(format!("zoom {z} above {MAX_ZOOM}")));
        }
        let n = 1u64 << z;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(invalid(format!("tile ({x}, {y}) outside a {n}x{n} grid")));
        }
        Ok(Self { z, x, y })
    }
}

/// Ground distance covered by one 256-px tile pixel.
pub fn meters_per_pixel(lat_deg: f64, zoom: i32) -> Result<f64> {
    check_latitude(lat_deg)?;
    if zoom < 0 {
        return Err(invalid(format!("zoom {zoom} is negative")));
    }
    let cos = libm::cos(lat_deg.to_radians());
    Ok(EARTH_CIRCUMFERENCE_M * cos / libm::exp2(f64::from(zoom) + 8.0))
}

/// Pixels per window side, rounded half-up, at least one.
pub fn window_pixel_extent(window: &GeoWindow) -> Result<usize> {
    window.validate()?;
    let mpp = meters_per_pixel(window.center.lat_deg, i32::from(window.zoom))?;
    let px = libm::floor(window.side_m / mpp + 0.5);
    Ok((px as usize).max(1))
}

pub fn tile_index(lat_deg: f64, lon_deg: f64, zoom: u8) -> Result<TileIndex> {
    check_latitude(lat_deg)?;
    if !lon_deg.is_finite() {
        return Err(invalid("longitude must be finite"));
    }
    if zoom > MAX_ZOOM {
        return Err(invalid(format!("zoom {zoom} above {MAX_ZOOM}")));
    }
    let n = libm::exp2(f64::from(zoom));
    let max = n - 1.0;
    let x = libm::floor((lon_deg + 180.0) / 360.0 * n).clamp(0.0, max);
    let phi = lat_deg.to_radians();
    let merc = libm::log(libm::tan(phi) + 1.0 / libm::cos(phi));
    let y = libm::floor((1.0 - merc / core::f64::consts::PI) / 2.0 * n).clamp(0.0, max);
    Ok(TileIndex { z: zoom, x: x as u32, y: y as u32 })
}

/// Axis-aligned rectangle in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let finite = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite());
        if !finite || max_x < min_x || max_y < min_y {
            return Err(invalid("bounding box corners must be finite and ordered"));
        }
        Ok(Self { min_x, min_y, max_x, max_y })
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// Draws `n` window centers inside `bbox` whose squares of side `side_m` do
/// not overlap (Chebyshev center distance at least `side_m`).
///
/// Proposals are uniform over a lattice of spacing [`PLACEMENT_GRID_M`]
/// anchored at the box corner and are rejected on conflict, with a budget of
/// [`PLACEMENT_BUDGET_PER_POINT`]`·n` proposals. Continuous uniform proposals
/// jam at roughly 56% coverage, below what dense requests need; the lattice
/// lets squares pack edge to edge.
pub fn sample_nonoverlapping(bbox: &BBox, n: usize, side_m: f64, lat_deg: f64, seed: u64) -> Result<Vec<GeoPoint>> {
    if !(side_m > 0.0 && side_m.is_finite()) {
        return Err(invalid(format!("window side {side_m} must be positive")));
    }
    check_latitude(lat_deg)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let grid = PLACEMENT_GRID_M.min(side_m);
    let nx = libm::floor(bbox.width() / grid) as u64 + 1;
    let ny = libm::floor(bbox.height() / grid) as u64 + 1;
    let mut rng = seeded(seed);
    let mut placed: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut hash = SpatialHash::new(side_m);
    let budget = PLACEMENT_BUDGET_PER_POINT.saturating_mul(n);
    for _ in 0..budget {
        if placed.len() == n {
            break;
        }
        let x = bbox.min_x + rng.random_range(0..nx) as f64 * grid;
        let y = bbox.min_y + rng.random_range(0..ny) as f64 * grid;
        if hash.conflicts(&placed, x, y, side_m) {
            continue;
        }
        hash.insert(x, y, placed.len());
        placed.push((x, y));
    }
    if placed.len() < n {
        return Err(Error::Capacity { achieved: placed.len(), requested: n });
    }
    placed.into_iter().map(|(x, y)| GeoPoint::new(x, y, lat_deg)).collect()
}

/// Uniform bucket grid with cell size equal to the exclusion distance, so a
/// conflict can only come from the 3×3 neighbourhood of a cell.
struct SpatialHash {
    cell: f64,
    buckets: alloc::collections::BTreeMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        Self { cell, buckets: alloc::collections::BTreeMap::new() }
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        (libm::floor(x / self.cell) as i64, libm::floor(y / self.cell) as i64)
    }

    fn insert(&mut self, x: f64, y: f64, idx: usize) {
        let k = self.key(x, y);
        self.buckets.entry(k).or_default().push(idx);
    }

    fn conflicts(&self, placed: &[(f64, f64)], x: f64, y: f64, side: f64) -> bool {
        let (kx, ky) = self.key(x, y);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &i in list {
                        let (px, py) = placed[i];
                        if (px - x).abs().max((py - y).abs()) < side {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_resolution_closed_forms() {
        assert!((meters_per_pixel(0.0, 0).unwrap() - 156_543.033_9).abs() < 1e-3);
        assert!((meters_per_pixel(60.0, 17).unwrap() - 0.597_164_283_484_220_6).abs() < 1e-12);
        let london = meters_per_pixel(51.5, 17).unwrap();
        assert!((london - 0.7435).abs() < 0.01);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(meters_per_pixel(86.0, 3).is_err());
        assert!(meters_per_pixel(10.0, -1).is_err());
        assert!(tile_index(f64::NAN, 0.0, 3).is_err());
        assert!(TileIndex::new(1, 2, 0).is_err());
        let c = GeoPoint::new(0.0, 0.0, 0.0).unwrap();
        assert!(GeoWindow::new(c, 0.0, 17).is_err());
    }

    #[test]
    fn window_extents() {
        let w = |side, lat| GeoWindow::new(GeoPoint::new(0.0, 0.0, lat).unwrap(), side, 17).unwrap();
        let london = window_pixel_extent(&w(80.0, 51.5)).unwrap();
        assert!((106..=108).contains(&london), "{london}");
        assert_eq!(window_pixel_extent(&w(80.0, 0.0)).unwrap(), 67);
        assert_eq!(window_pixel_extent(&w(0.7435, 51.5)).unwrap(), 1);
    }

    #[test]
    fn tile_addresses() {
        assert_eq!(tile_index(0.0, 0.0, 0).unwrap(), TileIndex { z: 0, x: 0, y: 0 });
        assert_eq!(tile_index(0.0, 0.0, 1).unwrap(), TileIndex { z: 1, x: 1, y: 1 });
        assert_eq!(tile_index(51.5074, -0.1278, 17).unwrap(), TileIndex { z: 17, x: 65489, y: 43584 });
        assert_eq!(tile_index(MAX_LATITUDE, 180.0, 2).unwrap(), TileIndex { z: 2, x: 3, y: 0 });
    }

    #[test]
    fn two_windows_in_a_strip() {
        let bbox = BBox::new(0.0, 0.0, 160.0, 80.0).unwrap();
        let pts = sample_nonoverlapping(&bbox, 2, 80.0, 51.5, 3).unwrap();
        assert!(pts[0].chebyshev(&pts[1]) >= 80.0);
    }

    #[test]
    fn impossible_request_reports_capacity() {
        let bbox = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        match sample_nonoverlapping(&bbox, 10, 80.0, 0.0, 1) {
            Err(Error::Capacity { achieved, requested: 10 }) => assert!(achieved >= 1 && achieved <= 4),
            other => panic!("{other:?}"),
        }
    }
}
