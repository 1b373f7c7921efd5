//! Floating-point RGB image buffer with 8-bit PNG persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major interleaved RGB, channel values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::validation(
                "image",
                format!("buffer of {} values for {width}x{height}x3", data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Rec. 601 luma: `0.299 R + 0.587 G + 0.114 B`.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Snaps every channel to the nearest multiple of 1/255, i.e. the
    /// value an 8-bit PNG round trip produces.
    pub fn quantized(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        writer
            .finish()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        Ok(())
    }

    /// Loads an 8-bit RGB or RGBA PNG, mapping each byte `b` to `b / 255`.
    /// Errors are returned as plain strings so callers can attach context.
    pub fn load_png(path: &Path) -> std::result::Result<RgbImage, String> {
        let file = File::open(path).map_err(|e| e.to_string())?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| "image too large".to_string())?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(format!("unsupported bit depth {:?}", info.bit_depth));
        }
        let stride = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(format!("unsupported color type {other:?}")),
        };
        let (w, h) = (info.width as usize, info.height as usize);
        let mut data = Vec::with_capacity(w * h * 3);
        for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
            for px in row[..w * stride].chunks_exact(stride) {
                data.extend(px[..3].iter().map(|&b| b as f64 / 255.0));
            }
        }
        Ok(RgbImage {
            width: w,
            height: h,
            data,
        })
    }

    /// Separable Gaussian blur with clamp-to-edge borders. `sigma = 0`
    /// returns an exact copy.
    pub fn gaussian_blur(&self, sigma: f64) -> RgbImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);

        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = RgbImage::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let p = self.pixel((x + i).clamp(0, w - 1) as usize, y as usize);
                    for c in 0..3 {
                        acc[c] += k * p[c];
                    }
                }
                tmp.set_pixel(x as usize, y as usize, acc);
            }
        }
        let mut out = RgbImage::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let p = tmp.pixel(x as usize, (y + i).clamp(0, h - 1) as usize);
                    for c in 0..3 {
                        acc[c] += k * p[c];
                    }
                }
                out.set_pixel(x as usize, y as usize, acc);
            }
        }
        out
    }

    /// Bilinear resampling with pixel-center alignment. Exact copy when
    /// the size is unchanged.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RgbImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let sample_axis = |dst: usize, s: f64, n: usize| -> (usize, usize, f64) {
            let src = ((dst as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        };
        RgbImage::from_fn(width, height, |x, y| {
            let (x0, x1, fx) = sample_axis(x, sx, self.width);
            let (y0, y1, fy) = sample_axis(y, sy, self.height);
            let (a, b, c, d) = (
                self.pixel(x0, y0),
                self.pixel(x1, y0),
                self.pixel(x0, y1),
                self.pixel(x1, y1),
            );
            let mut out = [0.0; 3];
            for ch in 0..3 {
                let top = a[ch] * (1.0 - fx) + b[ch] * fx;
                let bottom = c[ch] * (1.0 - fx) + d[ch] * fx;
                out[ch] = top * (1.0 - fy) + bottom * fy;
            }
            out
        })
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RgbImage::from_fn(7, 5, |x, y| [x as f64 / 7.0, y as f64 / 5.0, 0.3]);
        img.save_png(&path).unwrap();
        let back = RgbImage::load_png(&path).unwrap();
        assert_eq!(back, img.quantized());
        back.save_png(&path).unwrap();
        assert_eq!(RgbImage::load_png(&path).unwrap(), back);
    }

    #[test]
    fn blur_preserves_constant_and_mean() {
        let flat = RgbImage::filled(9, 9, [0.25, 0.5, 0.75]);
        let blurred = flat.gaussian_blur(2.0);
        for (a, b) in flat.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let img = RgbImage::from_fn(9, 9, |x, _| [(x % 2) as f64; 3]);
        assert_eq!(img.gaussian_blur(0.0), img);
        let b = img.gaussian_blur(1.5);
        assert!(b.pixel(4, 4)[0] > 0.3 && b.pixel(4, 4)[0] < 0.7);
    }

    #[test]
    fn halving_averages_pixel_pairs() {
        let img = RgbImage::from_fn(4, 4, |x, y| [(x + 4 * y) as f64; 3]);
        let half = img.resize_bilinear(2, 2);
        // dst (0,0) samples src (0.5, 0.5): mean of 0, 1, 4, 5
        assert!((half.pixel(0, 0)[0] - 2.5).abs() < 1e-12);
        assert!((half.pixel(1, 1)[0] - 12.5).abs() < 1e-12);
    }
}
