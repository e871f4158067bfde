use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::prelude::*;
use crate::rng;
use crate::scene::TileImage;

/// An element of the 8-element symmetry group of the square, generated by
/// flips and transposition. Applied as: vertical flip, horizontal flip, then
/// transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub flip_rows: bool,
    pub flip_cols: bool,
    pub transpose: bool,
}

impl Dihedral {
    pub const IDENTITY: Self = Self { flip_rows: false, flip_cols: false, transpose: false };

    pub fn from_index(i: u8) -> Self {
        Self { flip_cols: i & 1 != 0, flip_rows: i & 2 != 0, transpose: i & 4 != 0 }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..8).map(Self::from_index)
    }
}

/// Applies `g` to a square image.
pub fn dihedral(image: &TileImage, g: Dihedral) -> Result<TileImage> {
    let n = image.height();
    if n != image.width() {
        return Err(invalid(format!("augmentation needs a square image, got {}x{}", n, image.width())));
    }
    let mut data = vec![0.0f32; image.data().len()];
    let src = image.data();
    for c in 0..image.channels() {
        let plane = c * n * n;
        for y in 0..n {
            for x in 0..n {
                let (mut sy, mut sx) = if g.transpose { (x, y) } else { (y, x) };
                if g.flip_rows {
                    sy = n - 1 - sy;
                }
                if g.flip_cols {
                    sx = n - 1 - sx;
                }
                data[plane + y * n + x] = src[plane + sy * n + sx];
            }
        }
    }
    TileImage::new(n, n, image.semantics(), data)
}

/// Applies a uniformly drawn dihedral element.
pub fn augment(image: &TileImage, seed: u64) -> Result<TileImage> {
    let g = Dihedral::from_index(rng::seeded(seed).random_range(0..8u8));
    dihedral(image, g)
}
