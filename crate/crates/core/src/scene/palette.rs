use crate::error::{invalid, Result};
use crate::prelude::*;

use super::{LandUseClass, RoadClass};

pub type Rgb = [f32; 3];

/// Colors for every land-use and road class, in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Palette {
    pub industrial: Rgb,
    pub residential: Rgb,
    pub commercial: Rgb,
    pub park: Rgb,
    pub forest: Rgb,
    pub water: Rgb,
    pub neutral: Rgb,
    pub motorway: Rgb,
    pub trunk: Rgb,
    pub primary: Rgb,
    pub secondary: Rgb,
    pub local: Rgb,
    pub footpath: Rgb,
}

impl Default for Palette {
    /// Light land-use tints with red/orange major roads and white local
    /// streets.
    fn default() -> Self {
        Self {
            industrial: [0.86, 0.68, 0.90],
            residential: [0.82, 0.82, 0.82],
            commercial: [0.98, 0.78, 0.78],
            park: [0.72, 0.96, 0.72],
            forest: [0.52, 0.74, 0.48],
            water: [0.58, 0.76, 0.96],
            neutral: [0.94, 0.92, 0.86],
            motorway: [0.90, 0.36, 0.36],
            trunk: [0.98, 0.58, 0.30],
            primary: [0.99, 0.80, 0.50],
            secondary: [0.94, 0.96, 0.56],
            local: [1.0, 1.0, 1.0],
            footpath: [0.60, 0.45, 0.40],
        }
    }
}

/// Minimum channel-wise L∞ distance required between any two palette colors.
pub const MIN_SEPARATION: f32 = 0.1;

impl Palette {
    pub fn land_use(&self, class: LandUseClass) -> Rgb {
        match class {
            LandUseClass::Industrial => self.industrial,
            LandUseClass::Residential => self.residential,
            LandUseClass::Commercial => self.commercial,
            LandUseClass::Park => self.park,
            LandUseClass::Forest => self.forest,
            LandUseClass::Water => self.water,
            LandUseClass::Neutral => self.neutral,
        }
    }

    pub fn road(&self, class: RoadClass) -> Rgb {
        match class {
            RoadClass::Motorway => self.motorway,
            RoadClass::Trunk => self.trunk,
            RoadClass::Primary => self.primary,
            RoadClass::Secondary => self.secondary,
            RoadClass::Local => self.local,
            RoadClass::Footpath => self.footpath,
        }
    }

    fn entries(&self) -> Vec<(&'static str, Rgb)> {
        let lu = LandUseClass::ALL.iter().map(|&c| (c.name(), self.land_use(c)));
        lu.chain(RoadClass::ALL.iter().map(|&c| (c.name(), self.road(c)))).collect()
    }

    /// Smallest L∞ distance between two entries.
    pub fn min_separation(&self) -> f32 {
        let e = self.entries();
        let mut best = f32::INFINITY;
        for i in 0..e.len() {
            for j in i + 1..e.len() {
                let d = (0..3).map(|k| (e[i].1[k] - e[j].1[k]).abs()).fold(0.0, f32::max);
                best = best.min(d);
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in self.entries() {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid(format!("palette color for {name} leaves [0, 1]")));
            }
        }
        let sep = self.min_separation();
        if sep < MIN_SEPARATION - 1e-6 {
            return Err(invalid(format!("palette colors are only {sep:.3} apart (need {MIN_SEPARATION})")));
        }
        Ok(())
    }

    /// Darker, desaturated variant standing in for aerial imagery colors.
    pub fn satellite_like(&self) -> Self {
        let f = |c: Rgb| -> Rgb {
            let gray = (c[0] + c[1] + c[2]) / 3.0;
            let tint = [0.34, 0.38, 0.30];
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = (0.45 * c[k] + 0.15 * gray + 0.40 * tint[k]).clamp(0.0, 1.0);
            }
            out
        };
        Self {
            industrial: f(self.industrial),
            residential: f(self.residential),
            commercial: f(self.commercial),
            park: f(self.park),
            forest: f(self.forest),
            water: f(self.water),
            neutral: f(self.neutral),
            motorway: f(self.motorway),
            trunk: f(self.trunk),
            primary: f(self.primary),
            secondary: f(self.secondary),
            local: f(self.local),
            footpath: f(self.footpath),
        }
    }

    /// FNV-1a digest of the 8-bit quantized colors, for dataset metadata.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, c) in self.entries() {
            for b in name.bytes().chain(c.iter().map(|v| (v * 255.0).round() as u8)) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
