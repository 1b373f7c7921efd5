//! Two-pass simulated aerial capture: oracle scenes, a small radiance
//! field, a render-quality classifier, and the planner that closes the loop.

pub mod camera;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod image;
mod linalg;
pub mod metrics;
pub mod mission;
pub mod nerf;
pub mod optim;
pub mod planner;
pub mod rng;
pub mod scene;

pub use error::{Error, LoadError, Result};
