use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::prelude::*;
use crate::rng::{derived, Rng};

use super::geometry::{centroid, segment_intersection, Point};
use super::{LandUseClass, PointFeature, PointKind, Road, RoadClass, Scene, Zone};

/// Parameters of the procedural city generator. The city occupies
/// `[0, width_m] × [0, height_m]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CityConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub lat_deg: f64,
    /// Street spacing is drawn uniformly from `[block_min_m, block_max_m]`.
    pub block_min_m: f64,
    pub block_max_m: f64,
    pub motorways: usize,
    pub trunks: usize,
    pub primaries: usize,
    pub secondaries: usize,
    /// Fraction of street intersections that carry a traffic signal.
    pub signal_fraction: f64,
    /// Probability that a block is split into two differently used parts.
    pub split_probability: f64,
    /// Relative frequency of each land use, in [`LandUseClass::ALL`] order.
    pub land_use_weights: [f64; 7],
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            width_m: 8100.0,
            height_m: 5580.0,
            lat_deg: 51.5,
            block_min_m: 110.0,
            block_max_m: 240.0,
            motorways: 1,
            trunks: 3,
            primaries: 5,
            secondaries: 8,
            signal_fraction: 0.3,
            split_probability: 0.35,
            land_use_weights: [0.10, 0.32, 0.16, 0.12, 0.07, 0.05, 0.18],
        }
    }
}

impl CityConfig {
    pub const MIN_AREA_M2: f64 = 1.0e6;

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m.is_finite() && self.height_m.is_finite() && self.width_m > 0.0 && self.height_m > 0.0) {
            return Err(invalid("city extents must be positive"));
        }
        if self.width_m * self.height_m < Self::MIN_AREA_M2 {
            return Err(invalid(format!(
                "city area {:.0} m² below the 1 km² minimum",
                self.width_m * self.height_m
            )));
        }
        if !(self.block_min_m > 0.0 && self.block_max_m >= self.block_min_m) {
            return Err(invalid("block spacing range must be positive and ordered"));
        }
        if 2.0 * self.block_max_m > self.width_m.min(self.height_m) {
            return Err(invalid("blocks too large for the city extents"));
        }
        if !(0.0..=1.0).contains(&self.signal_fraction) || !(0.0..=1.0).contains(&self.split_probability) {
            return Err(invalid("fractions must lie in [0, 1]"));
        }
        if self.land_use_weights.iter().any(|w| !(*w >= 0.0)) || self.land_use_weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("land-use weights must be non-negative with a positive sum"));
        }
        crate::geo::GeoPoint::new(0.0, 0.0, self.lat_deg).map(|_| ())
    }
}

/// Street line positions along one axis, strictly inside `(0, extent)`.
fn street_positions(extent: f64, cfg: &CityConfig, rng: &mut Rng) -> Vec<f64> {
    let mut out = Vec::new();
    let mut pos = rng.random_range(cfg.block_min_m / 2.0..=cfg.block_max_m);
    while pos < extent - cfg.block_min_m / 2.0 {
        out.push(pos);
        pos += rng.random_range(cfg.block_min_m..=cfg.block_max_m);
    }
    out
}

fn pick_land_use(weights: &[f64; 7], rng: &mut Rng) -> LandUseClass {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (w, &class) in weights.iter().zip(LandUseClass::ALL) {
        if u < *w {
            return class;
        }
        u -= w;
    }
    LandUseClass::Neutral
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

/// Seeded procedural city: a jittered street grid with classed streets, a
/// bent motorway, land-use blocks, footpaths through parks, traffic signals
/// at a fraction of intersections and one premise anchor per industrial zone.
pub fn generate_city(cfg: &CityConfig, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let (w, h) = (cfg.width_m, cfg.height_m);
    let mut rng = derived(seed, 0x0C17);

    let xs = street_positions(w, cfg, &mut rng);
    let ys = street_positions(h, cfg, &mut rng);
    let mut roads: Vec<Road> = Vec::new();
    for &x in &xs {
        roads.push(Road::new(vec![[x, 0.0], [x, h]], RoadClass::Local));
    }
    for &y in &ys {
        roads.push(Road::new(vec![[0.0, y], [w, y]], RoadClass::Local));
    }

    // Promote streets: one of each major class first so every class exists,
    // then the remaining quotas, always leaving at least one local street.
    let mut quota = Vec::new();
    let counts = [(RoadClass::Trunk, cfg.trunks), (RoadClass::Primary, cfg.primaries), (RoadClass::Secondary, cfg.secondaries)];
    for &(class, n) in &counts {
        if n > 0 {
            quota.push(class);
        }
    }
    for &(class, n) in &counts {
        quota.extend(core::iter::repeat(class).take(n.saturating_sub(1)));
    }
    quota.truncate(roads.len().saturating_sub(1));
    let mut idx: Vec<usize> = (0..roads.len()).collect();
    idx.shuffle(&mut rng);
    for (&i, &class) in idx.iter().zip(&quota) {
        roads[i] = Road::new(core::mem::take(&mut roads[i].path), class);
    }

    for _ in 0..cfg.motorways {
        let y0 = rng.random_range(0.1..0.45) * h;
        let y2 = rng.random_range(0.55..0.9) * h;
        let ym = (y0 + y2) / 2.0 + rng.random_range(-0.1..0.1) * h;
        let xm = rng.random_range(0.35..0.65) * w;
        let (start, end) = if rng.random_bool(0.5) { ([0.0, y0], [w, y2]) } else { ([0.0, y2], [w, y0]) };
        roads.push(Road::new(vec![start, [xm, ym], end], RoadClass::Motorway));
    }

    let mut bx = vec![0.0];
    bx.extend(&xs);
    bx.push(w);
    let mut by = vec![0.0];
    by.extend(&ys);
    by.push(h);
    let mut zones = Vec::new();
    for cx in bx.windows(2) {
        for cy in by.windows(2) {
            let (x0, x1, y0, y1) = (cx[0], cx[1], cy[0], cy[1]);
            if rng.random_bool(cfg.split_probability) {
                let t = rng.random_range(0.35..0.65);
                let (a, b) = if x1 - x0 >= y1 - y0 {
                    let xm = x0 + t * (x1 - x0);
                    (rect(x0, y0, xm, y1), rect(xm, y0, x1, y1))
                } else {
                    let ym = y0 + t * (y1 - y0);
                    (rect(x0, y0, x1, ym), rect(x0, ym, x1, y1))
                };
                zones.push(Zone { polygon: a, class: pick_land_use(&cfg.land_use_weights, &mut rng) });
                zones.push(Zone { polygon: b, class: pick_land_use(&cfg.land_use_weights, &mut rng) });
            } else {
                let class = pick_land_use(&cfg.land_use_weights, &mut rng);
                zones.push(Zone { polygon: rect(x0, y0, x1, y1), class });
            }
        }
    }
    let mut order: Vec<usize> = (0..zones.len()).collect();
    order.shuffle(&mut rng);
    let mut forced = order.into_iter();
    for &class in LandUseClass::ALL {
        if !zones.iter().any(|z| z.class == class) {
            let donor = forced.find(|&i| {
                let c = zones[i].class;
                zones.iter().filter(|z| z.class == c).count() > 1
            });
            if let Some(i) = donor {
                zones[i].class = class;
            }
        }
    }

    for z in zones.iter().filter(|z| z.class == LandUseClass::Park) {
        let ([x0, y0], [x1, y1]) = (z.polygon[0], z.polygon[2]);
        let inset = 8.0;
        if x1 - x0 > 4.0 * inset && y1 - y0 > 4.0 * inset {
            roads.push(Road::new(vec![[x0 + inset, y0 + inset], [x1 - inset, y1 - inset]], RoadClass::Footpath));
        }
    }

    let mut scene = Scene { roads, zones, points: Vec::new(), background: LandUseClass::Neutral, lat_deg: cfg.lat_deg };
    let mut crossings = intersections(&scene);
    let k = libm::round(cfg.signal_fraction * crossings.len() as f64) as usize;
    crossings.shuffle(&mut rng);
    crossings.truncate(k);
    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    scene.points.extend(crossings.into_iter().map(|p| PointFeature { position: p, kind: PointKind::TrafficSignal }));
    let anchors: Vec<PointFeature> = scene
        .zones
        .iter()
        .filter(|z| z.class == LandUseClass::Industrial)
        .map(|z| PointFeature { position: centroid(&z.polygon), kind: PointKind::IndustrialPremiseAnchor })
        .collect();
    scene.points.extend(anchors);
    Ok(scene)
}

/// Street intersections: distinct crossing points between pairs of roads
/// that are neither motorways nor footpaths (grade-separated or
/// pedestrian-only ways carry no signals).
pub fn intersections(scene: &Scene) -> Vec<Point> {
    let streets: Vec<&Road> = scene
        .roads
        .iter()
        .filter(|r| !matches!(r.class, RoadClass::Motorway | RoadClass::Footpath))
        .collect();
    let mut out: Vec<Point> = Vec::new();
    for i in 0..streets.len() {
        for j in i + 1..streets.len() {
            for s in streets[i].path.windows(2) {
                for t in streets[j].path.windows(2) {
                    if let Some(p) = segment_intersection(s[0], s[1], t[0], t[1]) {
                        if !out.iter().any(|q| (q[0] - p[0]).abs() < 1e-6 && (q[1] - p[1]).abs() < 1e-6) {
                            out.push(p);
                        }
                    }
                }
            }
        }
    }
    out
}
