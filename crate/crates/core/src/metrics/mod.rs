//! Reference-based image quality and distribution statistics.

mod psnr;
mod ssim;
mod stats;

pub use psnr::{mse, psnr, Psnr};
pub use ssim::{ssim, SsimConfig};
pub use stats::{cdf, quantile};
