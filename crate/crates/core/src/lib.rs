//! Deterministic procedural forest point clouds: terrain, vegetation
//! placement pipelines, grass, scene assembly, sensor simulation, dataset
//! assembly and segmentation metrics.

pub mod cli;
pub mod cloud;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod grass;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod scene;
pub mod sensor;
pub mod terrain;
pub mod texture;

pub use error::{Error, Result};
