use std::fmt;

use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Peak signal-to-noise ratio. Identical images have no finite PSNR and
/// are reported as [`Psnr::Identical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    /// Value in dB, with `Identical` mapped to `+∞` for ordering and
    /// statistics.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Identical => f64::INFINITY,
        }
    }

    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::Identical => f.write_str("inf"),
        }
    }
}

/// Mean of squared differences over every pixel and channel.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::validation(
            "image",
            format!("{}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height()),
        ));
    }
    let n = a.data().len();
    if n == 0 {
        return Err(Error::validation("image", "empty image"));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / n as f64)
}

/// `10·log10(max_val² / MSE)` over all three channels jointly.
pub fn psnr(a: &RgbImage, b: &RgbImage, max_val: f64) -> Result<Psnr> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(Psnr::Identical)
    } else {
        Ok(Psnr::Db(10.0 * (max_val * max_val / m).log10()))
    }
}
