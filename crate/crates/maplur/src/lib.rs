//! Operational surface of the MapLUR workbench: experiment configuration,
//! dataset and model files, tile providers, pollution-map rendering and the
//! command implementations behind the `maplur` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod models;
pub mod provider;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
