//! Pollution-map and saliency rasters.

use maplur_core::interpret::SaliencyMap;

/// Stops of the pollution color scale: position in `[0, 1]` and sRGB color,
/// running green (clean) through yellow to dark red (polluted).
pub const COLOR_STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [26, 152, 80]),
    (0.25, [145, 207, 96]),
    (0.5, [254, 224, 139]),
    (0.75, [252, 141, 89]),
    (1.0, [215, 48, 39]),
];

/// Color of `value` on the scale spanning `[min, max]` µg/m³; values
/// outside the range clamp to the end colors, NaN maps to black.
pub fn color(value: f64, min: f64, max: f64) -> [u8; 3] {
    if value.is_nan() {
        return [0, 0, 0];
    }
    let t = ((value - min) / (max - min)).clamp(0.0, 1.0);
    let k = COLOR_STOPS.windows(2).position(|w| t <= w[1].0).unwrap_or(COLOR_STOPS.len() - 2);
    let ((t0, c0), (t1, c1)) = (COLOR_STOPS[k], COLOR_STOPS[k + 1]);
    let f = (t - t0) / (t1 - t0);
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = (c0[i] as f64 + f * (c1[i] as f64 - c0[i] as f64)).round() as u8;
    }
    out
}

/// Row-major `rows × cols` grid (row 0 north) as interleaved RGB with
/// `cell_px` square pixels per cell.
pub fn grid_rgb(values: &[f64], rows: usize, cols: usize, cell_px: usize, min: f64, max: f64) -> Vec<u8> {
    let (w, h) = (cols * cell_px, rows * cell_px);
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let c = color(values[(y / cell_px) * cols + x / cell_px], min, max);
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
        }
    }
    out
}

/// Saliency values in `[0, 1]` as 8-bit gray.
pub fn saliency_gray(map: &SaliencyMap) -> Vec<u8> {
    map.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}
