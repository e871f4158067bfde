//! Interpretability: guided-backpropagation saliency and artificial-tile
//! probes of entity, area and distance features.

use crate::autodiff::{Mode, Real, Sequential, Tensor};
use crate::error::{invalid, shape, Error, Result};
use crate::model::{predict_batch, TrainedModel};
use crate::prelude::*;
use crate::scene::{artificial_tile, Axis, Entity, LandUseClass, Palette, ProbeSpec, RoadClass, RoadOverlay, TileImage};

/// Input-space relevance raster: channel-max of the absolute guided
/// gradient, min-max normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, row 0 at the top.
    pub values: Vec<f64>,
    /// Largest channel-max absolute gradient before normalization.
    pub raw_max: f64,
    /// The raw map was constant (for instance all gates closed), so the
    /// normalized map is all zeros.
    pub degenerate: bool,
    pub model_id: String,
    pub input_id: String,
}

impl SaliencyMap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Reduces an input gradient `[1, C, H, W]` (or `[C, H, W]`).
    pub fn from_gradient(grad: &[f64], dims: &[usize]) -> Result<Self> {
        let (c, h, w) = match *dims {
            [1, c, h, w] | [c, h, w] => (c, h, w),
            _ => return Err(shape(format!("saliency needs a [1, C, H, W] gradient, got {dims:?}"))),
        };
        if grad.len() != c * h * w || c == 0 {
            return Err(shape("gradient length does not match its shape"));
        }
        let plane = h * w;
        let raw: Vec<f64> =
            (0..plane).map(|i| (0..c).map(|k| grad[k * plane + i].abs()).fold(0.0, f64::max)).collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = !(hi > lo);
        let values = if degenerate { vec![0.0; plane] } else { raw.iter().map(|v| (v - lo) / (hi - lo)).collect() };
        Ok(Self { height: h, width: w, values, raw_max: hi, degenerate, model_id: String::new(), input_id: String::new() })
    }

    /// Mean saliency over the pixels where `mask` is true.
    pub fn masked_mean(&self, mask: &[bool]) -> Option<f64> {
        let (s, n) = self.values.iter().zip(mask).filter(|(_, m)| **m).fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }
}

/// Gradient of the summed network output with respect to the input, with
/// every ReLU in guided mode and batch norm on its running statistics. The
/// network itself is left untouched.
pub fn guided_gradient<T: Real>(net: &Sequential<T>, input: Tensor<T>) -> Result<Tensor<T>> {
    if !net.eval_ready() {
        return Err(Error::UninitializedStats);
    }
    let mut work = net.clone();
    work.set_guided_mode(true);
    let out = work.forward(input, Mode::Eval)?;
    let ones = Tensor::from_vec(out.shape(), vec![T::one(); out.numel()])?;
    work.backward(ones, true)?.ok_or_else(|| invalid("network produced no input gradient"))
}

/// Guided-backpropagation saliency of one tile under a trained model.
pub fn guided_saliency(model: &TrainedModel, image: &TileImage, input_id: &str) -> Result<SaliencyMap> {
    let spec = &model.spec;
    if image.channels() != spec.in_channels || image.height() != spec.input_px || image.width() != spec.input_px {
        return Err(shape(format!(
            "image is {}x{}x{}, network expects {}x{}x{}",
            image.channels(),
            image.height(),
            image.width(),
            spec.in_channels,
            spec.input_px,
            spec.input_px
        )));
    }
    let dims = [1, image.channels(), image.height(), image.width()];
    let grad = guided_gradient(&model.net, Tensor::from_vec(&dims, image.data().to_vec())?)?;
    let g: Vec<f64> = grad.data().iter().map(|v| f64::from(*v)).collect();
    let mut map = SaliencyMap::from_gradient(&g, &dims)?;
    map.model_id = format!("{:016x}", model_fingerprint(model));
    map.input_id = input_id.to_string();
    Ok(map)
}

/// FNV-1a over the parameter bits; identifies a set of weights.
pub fn model_fingerprint(model: &TrainedModel) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in model.net.parameters() {
        for v in p.data() {
            for b in v.to_bits().to_le_bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// Anything that maps probe tiles to concentration estimates.
pub trait TileEstimator {
    fn input_px(&self) -> usize;
    fn estimate(&self, tiles: &[TileImage]) -> Result<Vec<f64>>;
}

impl TileEstimator for TrainedModel {
    fn input_px(&self) -> usize {
        self.spec.input_px
    }

    fn estimate(&self, tiles: &[TileImage]) -> Result<Vec<f64>> {
        predict_batch(self, tiles)
    }
}

/// Probe road width at a given tile size: 12 px at 224 px, scaled.
pub fn default_road_width(px: usize) -> usize {
    ((px * 12 + 112) / 224).max(1)
}

/// The nine full-cover entities: seven land uses, then motorway and trunk.
pub const PROBE_ENTITIES: [Entity; 9] = [
    Entity::LandUse(LandUseClass::Industrial),
    Entity::LandUse(LandUseClass::Residential),
    Entity::LandUse(LandUseClass::Commercial),
    Entity::LandUse(LandUseClass::Park),
    Entity::LandUse(LandUseClass::Forest),
    Entity::LandUse(LandUseClass::Water),
    Entity::LandUse(LandUseClass::Neutral),
    Entity::Road(RoadClass::Motorway),
    Entity::Road(RoadClass::Trunk),
];

/// Overlay rows: none, trunk, motorway.
pub const PROBE_OVERLAYS: [Option<RoadClass>; 3] = [None, Some(RoadClass::Trunk), Some(RoadClass::Motorway)];

/// Estimates per overlay row (`PROBE_OVERLAYS`) and entity column
/// (`PROBE_ENTITIES`); road-on-road cells are `None`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntityTable {
    pub entities: Vec<Entity>,
    pub overlays: Vec<Option<RoadClass>>,
    pub road_width_px: usize,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl EntityTable {
    pub fn get(&self, overlay: Option<RoadClass>, entity: Entity) -> Option<f64> {
        let r = self.overlays.iter().position(|o| *o == overlay)?;
        let c = self.entities.iter().position(|e| *e == entity)?;
        self.cells[r][c]
    }

    pub fn populated(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }
}

/// Estimates on full-cover entity tiles, plain and crossed by a centered
/// vertical trunk or motorway of `road_width_px`.
pub fn entity_probe(model: &impl TileEstimator, palette: &Palette, road_width_px: usize) -> Result<EntityTable> {
    let px = model.input_px();
    let mut tiles = Vec::new();
    let mut slots = Vec::new();
    for (r, overlay) in PROBE_OVERLAYS.iter().enumerate() {
        for (c, entity) in PROBE_ENTITIES.iter().enumerate() {
            let spec = match (overlay, entity) {
                (Some(_), Entity::Road(_)) => continue,
                (None, _) => ProbeSpec::uniform(*entity, px),
                (Some(class), _) => ProbeSpec::with_road(
                    *entity,
                    RoadOverlay { class: *class, width_px: road_width_px, axis: Axis::Vertical, offset_px: 0 },
                    px,
                ),
            };
            tiles.push(artificial_tile(&spec, palette)?);
            slots.push((r, c));
        }
    }
    let est = model.estimate(&tiles)?;
    let mut cells = vec![vec![None; PROBE_ENTITIES.len()]; PROBE_OVERLAYS.len()];
    for ((r, c), v) in slots.into_iter().zip(est) {
        cells[r][c] = Some(v);
    }
    Ok(EntityTable { entities: PROBE_ENTITIES.to_vec(), overlays: PROBE_OVERLAYS.to_vec(), road_width_px, cells })
}

/// Model estimates along one probe axis.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeCurve {
    pub axis: Axis,
    /// Road width or offset in pixels, strictly increasing.
    pub abscissa: Vec<f64>,
    pub estimates: Vec<f64>,
    /// `None` when either series is constant or shorter than two points.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

impl ProbeCurve {
    fn new(axis: Axis, abscissa: Vec<f64>, estimates: Vec<f64>) -> Self {
        let pearson = pearson(&abscissa, &estimates).ok();
        let spearman = spearman(&abscissa, &estimates).ok();
        Self { axis, abscissa, estimates, pearson, spearman }
    }
}

/// Probe curves for a road running each way.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeCurves {
    pub horizontal: ProbeCurve,
    pub vertical: ProbeCurve,
}

impl ProbeCurves {
    pub fn get(&self, axis: Axis) -> &ProbeCurve {
        match axis {
            Axis::Horizontal => &self.horizontal,
            Axis::Vertical => &self.vertical,
        }
    }
}

fn strictly_increasing<T: PartialOrd>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid(format!("{what} must be non-empty and strictly increasing")));
    }
    Ok(())
}

const PROBE_BACKGROUND: Entity = Entity::LandUse(LandUseClass::Neutral);

fn road_curves(
    model: &impl TileEstimator,
    palette: &Palette,
    abscissa: Vec<f64>,
    overlay: impl Fn(Axis, usize) -> RoadOverlay,
) -> Result<ProbeCurves> {
    let px = model.input_px();
    let curve = |axis: Axis| -> Result<ProbeCurve> {
        let tiles = (0..abscissa.len())
            .map(|k| {
                let road = overlay(axis, k);
                if road.width_px > 0 && road.band(px).is_none() {
                    // Entirely outside the tile: nothing of the road is visible.
                    return artificial_tile(&ProbeSpec::uniform(PROBE_BACKGROUND, px), palette);
                }
                artificial_tile(&ProbeSpec::with_road(PROBE_BACKGROUND, road, px), palette)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbeCurve::new(axis, abscissa.clone(), model.estimate(&tiles)?))
    };
    Ok(ProbeCurves { horizontal: curve(Axis::Horizontal)?, vertical: curve(Axis::Vertical)? })
}

/// Estimate versus the width of a centered trunk road on the neutral
/// background, for both road directions.
pub fn area_probe(model: &impl TileEstimator, palette: &Palette, widths_px: &[usize]) -> Result<ProbeCurves> {
    strictly_increasing(widths_px, "probe widths")?;
    let px = model.input_px();
    if widths_px[widths_px.len() - 1] > px {
        return Err(invalid(format!("road widths must not exceed the {px} px tile")));
    }
    road_curves(model, palette, widths_px.iter().map(|&w| w as f64).collect(), |axis, k| RoadOverlay {
        class: RoadClass::Trunk,
        width_px: widths_px[k],
        axis,
        offset_px: 0,
    })
}

/// Estimate versus the offset of a fixed-width trunk road from the tile
/// center, for both road directions. Offsets that push the road fully off
/// the tile give the plain background tile.
pub fn distance_probe(
    model: &impl TileEstimator,
    palette: &Palette,
    width_px: usize,
    offsets_px: &[i64],
) -> Result<ProbeCurves> {
    strictly_increasing(offsets_px, "probe offsets")?;
    if width_px == 0 || width_px > model.input_px() {
        return Err(invalid("distance probe needs a road width between 1 px and the tile size"));
    }
    road_curves(model, palette, offsets_px.iter().map(|&o| o as f64).collect(), |axis, k| RoadOverlay {
        class: RoadClass::Trunk,
        width_px,
        axis,
        offset_px: offsets_px[k],
    })
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("correlation needs two equal-length series of at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSample("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson on mean ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid("correlation needs equal-length series"));
    }
    pearson(&ranks(x), &ranks(y))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        order[i..j].iter().for_each(|&k| r[k] = (i + j + 1) as f64 / 2.0);
        i = j;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlations() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[1.0, 10.0, 100.0, 1000.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn saliency_reduction() {
        // Two channels on a 1×2 image.
        let g = [0.5, -2.0, -1.0, 1.0];
        let m = SaliencyMap::from_gradient(&g, &[1, 2, 1, 2]).unwrap();
        assert_eq!(m.values, vec![0.0, 1.0]);
        assert_eq!(m.raw_max, 2.0);
        let z = SaliencyMap::from_gradient(&[0.0; 4], &[1, 1, 2, 2]).unwrap();
        assert!(z.degenerate && z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn road_width_scales() {
        assert_eq!(default_road_width(224), 12);
        assert_eq!(default_road_width(64), 3);
        assert_eq!(default_road_width(8), 1);
    }
}
