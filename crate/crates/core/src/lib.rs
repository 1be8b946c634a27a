//! Habitat change detection on co-registered aerial rasters.

pub mod error;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod runner;
pub mod sampling;
pub mod synth;
pub mod taxonomy;
pub mod terrain;

pub use error::{Error, Result};
