//! Positional-encoded MLP radiance field: volume rendering, photometric
//! training and point-cloud export.

pub mod encoding;
pub mod field;
pub mod pointcloud;
pub mod quadrature;
pub mod render;
pub mod train;

pub use encoding::{encoded_dim, positional_encode};
pub use field::{Activations, BackwardScratch, FieldArch, RadianceField};
pub use pointcloud::{extract_point_cloud, write_ply, CloudPoint};
pub use quadrature::{composite, composite_backward, sample_midpoints, sample_stratified, volume_render, Composite, RaySampleSet};
pub use render::{batch_loss, batch_loss_and_grad, ray_span, render_view, SampledRay, Sampling};
pub use train::{train, TrainConfig, TrainOutcome};
