use crate::error::{invalid, Result};

use super::geometry::{dist, polygon_dist, segment_dist, sub, Point};
use super::{LandUseClass, RoadClass, Scene};

/// Maximum arc-length step of the line-integral quadrature, in meters.
pub const ORACLE_STEP_M: f64 = 1.0;

/// Road segments farther than this many decay lengths from the receptor are
/// skipped, and the integral over nearer segments is restricted to the part
/// within that radius; the neglected tail is below `e^-40` per meter.
pub const ORACLE_CUTOFF_DECAYS: f64 = 40.0;

/// Parameters of the synthetic concentration field
/// `background + Σ_roads w(class)·∫ exp(−d/ℓ) dl + Σ_industrial w_ind·exp(−d/ℓ)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OracleParams {
    /// µg/m³.
    pub background_ugm3: f64,
    /// µg/m³ per meter of road, indexed like [`RoadClass::ALL`].
    pub road_weights: RoadWeights,
    /// µg/m³ contributed by an industrial zone at distance zero.
    pub industrial_weight: f64,
    /// Decay length ℓ in meters.
    pub decay_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoadWeights {
    pub motorway: f64,
    pub trunk: f64,
    pub primary: f64,
    pub secondary: f64,
    pub local: f64,
    pub footpath: f64,
}

impl RoadWeights {
    pub fn get(&self, class: RoadClass) -> f64 {
        match class {
            RoadClass::Motorway => self.motorway,
            RoadClass::Trunk => self.trunk,
            RoadClass::Primary => self.primary,
            RoadClass::Secondary => self.secondary,
            RoadClass::Local => self.local,
            RoadClass::Footpath => self.footpath,
        }
    }

    pub fn uniform(w: f64) -> Self {
        Self { motorway: w, trunk: w, primary: w, secondary: w, local: w, footpath: w }
    }
}

impl Default for RoadWeights {
    fn default() -> Self {
        Self { motorway: 0.55, trunk: 0.6, primary: 0.4, secondary: 0.25, local: 0.08, footpath: 0.0 }
    }
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { background_ugm3: 25.0, road_weights: RoadWeights::default(), industrial_weight: 12.0, decay_m: 25.0 }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        let w = &self.road_weights;
        let weights = [w.motorway, w.trunk, w.primary, w.secondary, w.local, w.footpath, self.industrial_weight];
        if weights.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("oracle weights must be finite and non-negative"));
        }
        if !(self.decay_m > 0.0 && self.decay_m.is_finite()) {
            return Err(invalid("oracle decay length must be positive"));
        }
        if !(self.background_ugm3 > 0.0 && self.background_ugm3.is_finite()) {
            return Err(invalid("oracle background must be positive"));
        }
        Ok(())
    }
}

/// Ground-truth concentration at `p` in µg/m³.
pub fn oracle_concentration(scene: &Scene, p: Point, params: &OracleParams) -> f64 {
    let ell = params.decay_m;
    let cutoff = ORACLE_CUTOFF_DECAYS * ell;
    let mut total = params.background_ugm3;
    for road in &scene.roads {
        let w = params.road_weights.get(road.class);
        if w == 0.0 {
            continue;
        }
        for s in road.path.windows(2) {
            if segment_dist(p, s[0], s[1]) > cutoff {
                continue;
            }
            total += w * segment_integral(p, s[0], s[1], ell, cutoff);
        }
    }
    if params.industrial_weight > 0.0 {
        for zone in scene.zones.iter().filter(|z| z.class == LandUseClass::Industrial) {
            let d = polygon_dist(p, &zone.polygon);
            if d <= cutoff {
                total += params.industrial_weight * libm::exp(-d / ell);
            }
        }
    }
    total
}

/// Midpoint-rule `∫ exp(−|p − x(t)|/ℓ) dl` over the part of segment `ab`
/// within `radius` of `p`, with steps of at most [`ORACLE_STEP_M`].
fn segment_integral(p: Point, a: Point, b: Point, ell: f64, radius: f64) -> f64 {
    let len = dist(a, b);
    if len == 0.0 {
        return 0.0;
    }
    let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let ap = sub(p, a);
    let along = ap[0] * dir[0] + ap[1] * dir[1];
    let perp2 = (ap[0] * ap[0] + ap[1] * ap[1] - along * along).max(0.0);
    let half = libm::sqrt((radius * radius - perp2).max(0.0));
    let t0 = (along - half).max(0.0);
    let t1 = (along + half).min(len);
    if t1 <= t0 {
        return 0.0;
    }
    let n = libm::ceil((t1 - t0) / ORACLE_STEP_M).max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let t = t0 + (i as f64 + 0.5) * h;
        let q = [a[0] + t * dir[0], a[1] + t * dir[1]];
        sum += libm::exp(-dist(p, q) / ell);
    }
    sum * h
}
