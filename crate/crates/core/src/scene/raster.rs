use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::geo::GeoWindow;
use crate::prelude::*;
use crate::rng::seeded;

use super::geometry::{point_in_polygon, segment_dist2, Point};
use super::{Aabb, ChannelSemantics, Palette, Rgb, Scene, TileImage};

/// Subpixels per output pixel along each axis; each output pixel is the box
/// average of its subpixels.
pub const SUPERSAMPLE: usize = 2;

/// Standard deviation of the per-pixel texture noise in satellite-like tiles.
pub const SATELLITE_NOISE_SD: f64 = 0.1;

pub const MIN_OUTPUT_PX: usize = 8;

struct Stroke {
    a: Point,
    b: Point,
    half_width2: f64,
    color: Rgb,
    aabb: Aabb,
}

struct Fill<'a> {
    polygon: &'a [Point],
    color: Rgb,
    aabb: Aabb,
}

/// Renders the scene inside `window` as an `out_px × out_px` map tile with
/// north up. Background first, then zones in list order, then roads by class
/// prominence (list order within a class). No labels are drawn.
pub fn rasterize(scene: &Scene, window: &GeoWindow, out_px: usize, palette: &Palette) -> Result<TileImage> {
    let data = render(scene, window, out_px, palette)?;
    TileImage::new(out_px, out_px, ChannelSemantics::Map, data)
}

/// Satellite-like tile: the scene under [`Palette::satellite_like`] plus
/// seeded Gaussian texture noise of standard deviation `sigma`, clipped to
/// `[0, 1]`.
pub fn synth_satellite(
    scene: &Scene,
    window: &GeoWindow,
    out_px: usize,
    palette: &Palette,
    noise_seed: u64,
    sigma: f64,
) -> Result<TileImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise sd {sigma} must be finite and non-negative")));
    }
    let mut data = render(scene, window, out_px, &palette.satellite_like())?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| invalid(format!("{e}")))?;
        let mut rng = seeded(noise_seed);
        for v in &mut data {
            *v = (f64::from(*v) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    TileImage::new(out_px, out_px, ChannelSemantics::SatelliteLike, data)
}

fn render(scene: &Scene, window: &GeoWindow, out_px: usize, palette: &Palette) -> Result<Vec<f32>> {
    window.validate()?;
    if out_px < MIN_OUTPUT_PX {
        return Err(invalid(format!("output size {out_px} px below {MIN_OUTPUT_PX}")));
    }
    let (min_x, min_y, max_x, max_y) = window.bounds();
    let view = Aabb { lo: [min_x, min_y], hi: [max_x, max_y] };

    let fills: Vec<Fill> = scene
        .zones
        .iter()
        .filter(|z| z.polygon.len() >= 3)
        .map(|z| Fill { polygon: &z.polygon, color: palette.land_use(z.class), aabb: Aabb::of(&z.polygon, 0.0) })
        .filter(|f| f.aabb.intersects(&view))
        .collect();

    let mut order: Vec<usize> = (0..scene.roads.len()).collect();
    order.sort_by_key(|&i| scene.roads[i].class);
    let mut strokes = Vec::new();
    for &i in &order {
        let road = &scene.roads[i];
        let hw = road.width_m / 2.0;
        for s in road.path.windows(2) {
            let aabb = Aabb::of(s, hw);
            if aabb.intersects(&view) {
                strokes.push(Stroke { a: s[0], b: s[1], half_width2: hw * hw, color: palette.road(road.class), aabb });
            }
        }
    }

    let sub = out_px * SUPERSAMPLE;
    let step = window.side_m / sub as f64;
    let background = palette.land_use(scene.background);
    let plane = out_px * out_px;
    let mut acc = vec![0.0f32; 3 * plane];
    let weight = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
    let mut row_fills: Vec<&Fill> = Vec::new();
    let mut row_strokes: Vec<&Stroke> = Vec::new();
    for i in 0..sub {
        let y = max_y - (i as f64 + 0.5) * step;
        row_fills.clear();
        row_fills.extend(fills.iter().filter(|f| f.aabb.lo[1] <= y && y <= f.aabb.hi[1]));
        row_strokes.clear();
        row_strokes.extend(strokes.iter().filter(|s| s.aabb.lo[1] <= y && y <= s.aabb.hi[1]));
        let out_row = i / SUPERSAMPLE;
        for j in 0..sub {
            let x = min_x + (j as f64 + 0.5) * step;
            let p = [x, y];
            let color = row_strokes
                .iter()
                .rev()
                .find(|s| s.aabb.contains(p) && segment_dist2(p, s.a, s.b) <= s.half_width2)
                .map(|s| s.color)
                .or_else(|| {
                    row_fills.iter().rev().find(|f| f.aabb.contains(p) && point_in_polygon(p, f.polygon)).map(|f| f.color)
                })
                .unwrap_or(background);
            let k = out_row * out_px + j / SUPERSAMPLE;
            for c in 0..3 {
                acc[c * plane + k] += color[c] * weight;
            }
        }
    }
    for v in &mut acc {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(acc)
}
