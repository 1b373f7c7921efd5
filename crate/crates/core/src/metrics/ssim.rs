use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Single-scale SSIM parameters. Defaults are the canonical 11×11 Gaussian
/// window with σ = 1.5 px, `K1 = 0.01`, `K2 = 0.03`, dynamic range 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel_1d(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let mut k: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - c;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        k
    }
}

/// Valid-region separable filter of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all window positions fully inside the image, computed on
/// luma with Gaussian-weighted moments.
pub fn ssim(a: &RgbImage, b: &RgbImage, cfg: &SsimConfig) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::validation(
            "image",
            format!("{}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height()),
        ));
    }
    let (w, h) = (a.width(), a.height());
    if w < cfg.window || h < cfg.window {
        return Err(Error::validation(
            "image",
            format!("{w}x{h} is smaller than the {0}x{0} SSIM window", cfg.window),
        ));
    }
    let ya = a.luma();
    let yb = b.luma();
    let k = cfg.kernel_1d();
    let mu_a = filter_valid(&ya, w, h, &k);
    let mu_b = filter_valid(&yb, w, h, &k);
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let e_aa = filter_valid(&sq(&ya, &ya), w, h, &k);
    let e_bb = filter_valid(&sq(&yb, &yb), w, h, &k);
    let e_ab = filter_valid(&sq(&ya, &yb), w, h, &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}
