//! Algorithmic core of the MapLUR workbench.
//!
//! Everything here is pure computation over in-memory data: tile geometry,
//! synthetic scenes and their rasterization, hand-crafted baseline features,
//! a small reverse-mode differentiation core with the layers the MapLUR
//! network needs, the baseline model builders, evaluation statistics and the
//! interpretability probes. File formats, the CLI and tile providers live in
//! the `maplur` companion crate.
//!
//! The crate builds without `std` (with `alloc`) when default features are
//! disabled; math then goes through `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod evalstat;
pub mod features;
pub mod geo;
pub mod interpret;
pub mod model;
pub mod rng;
pub mod scene;

mod linalg;
mod special;

pub use error::{Error, Result};

pub(crate) mod prelude {
    pub use alloc::format;
    pub use alloc::string::{String, ToString};
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}
