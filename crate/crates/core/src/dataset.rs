//! Posed image datasets and their on-disk manifest.
//!
//! A dataset directory holds `transforms.json` plus one 8-bit PNG per frame:
//!
//! ```json
//! {
//!   "fov_x": 1.0471975511965976,
//!   "width": 64,
//!   "height": 64,
//!   "frames": [
//!     { "frame_id": "p1-0000", "file_path": "images/p1-0000.png",
//!       "transform_matrix": [[r00, r01, r02, tx], [r10, r11, r12, ty],
//!                            [r20, r21, r22, tz], [0, 0, 0, 1]] }
//!   ]
//! }
//! ```
//!
//! `transform_matrix` is the row-major world-from-camera transform. Floats
//! are written in shortest round-trip form, so poses reload bit-exactly.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::error::{Error, LoadError, Result};
use crate::image::RgbImage;

pub const MANIFEST_FILE: &str = "transforms.json";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub pose: Pose,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureDataset {
    intrinsics: Intrinsics,
    frames: Vec<FrameRecord>,
}

impl CaptureDataset {
    pub fn new(intrinsics: Intrinsics, frames: Vec<FrameRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &frames {
            validate_frame_id(&f.frame_id)?;
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::validation(
                    "frame_id",
                    format!("duplicate frame id `{}`", f.frame_id),
                ));
            }
            if f.image.width() != intrinsics.width() || f.image.height() != intrinsics.height() {
                return Err(Error::validation(
                    "image",
                    format!(
                        "frame `{}` is {}x{}, intrinsics are {}x{}",
                        f.frame_id,
                        f.image.width(),
                        f.image.height(),
                        intrinsics.width(),
                        intrinsics.height()
                    ),
                ));
            }
            if !f.image.in_unit_range() {
                return Err(Error::validation(
                    "image",
                    format!("frame `{}` has channel values outside [0, 1]", f.frame_id),
                ));
            }
        }
        Ok(Self { intrinsics, frames })
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Union of two datasets with the same intrinsics: all of `self`'s
    /// frames followed by all of `other`'s.
    pub fn union(&self, other: &CaptureDataset) -> Result<CaptureDataset> {
        if self.intrinsics != other.intrinsics {
            return Err(Error::validation("intrinsics", "datasets disagree on intrinsics"));
        }
        let mut frames = self.frames.clone();
        frames.extend(other.frames.iter().cloned());
        CaptureDataset::new(self.intrinsics, frames)
    }
}

fn validate_frame_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && id != "."
        && id != "..";
    if ok {
        Ok(())
    } else {
        Err(Error::validation(
            "frame_id",
            format!("`{id}` must be non-empty and use only [A-Za-z0-9._-]"),
        ))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    fov_x: f64,
    width: usize,
    height: usize,
    frames: Vec<ManifestFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFrame {
    frame_id: String,
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

/// Writes the manifest and PNGs under `directory` (created if needed) and
/// returns the manifest path. Images are quantized to 8 bits.
pub fn write_pose_dataset(dataset: &CaptureDataset, directory: &Path) -> Result<PathBuf> {
    let images_dir = directory.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut frames = Vec::with_capacity(dataset.len());
    for f in &dataset.frames {
        let rel = format!("images/{}.png", f.frame_id);
        f.image.save_png(&directory.join(&rel))?;
        frames.push(ManifestFrame {
            frame_id: f.frame_id.clone(),
            file_path: rel,
            transform_matrix: f.pose.to_matrix(),
        });
    }
    let manifest = Manifest {
        fov_x: dataset.intrinsics.fov_x(),
        width: dataset.intrinsics.width(),
        height: dataset.intrinsics.height(),
        frames,
    };
    let path = directory.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_pose_dataset(directory: &Path) -> Result<CaptureDataset> {
    let path = directory.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(LoadError::MissingManifest(path).into());
    }
    let corrupt = |reason: String| LoadError::CorruptManifest {
        path: path.clone(),
        reason,
    };
    let text = fs::read_to_string(&path).map_err(|e| corrupt(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let intrinsics =
        Intrinsics::new(manifest.width, manifest.height, manifest.fov_x).map_err(|e| corrupt(e.to_string()))?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for mf in manifest.frames {
        let pose = Pose::from_matrix(&mf.transform_matrix)
            .map_err(|e| corrupt(format!("frame `{}`: {e}", mf.frame_id)))?;
        let image_path = directory.join(&mf.file_path);
        if !image_path.is_file() {
            return Err(LoadError::MissingImage {
                frame_id: mf.frame_id,
                path: image_path,
            }
            .into());
        }
        let image = RgbImage::load_png(&image_path).map_err(|reason| LoadError::BadImage {
            frame_id: mf.frame_id.clone(),
            path: image_path.clone(),
            reason,
        })?;
        if image.width() != intrinsics.width() || image.height() != intrinsics.height() {
            return Err(LoadError::DimensionMismatch {
                frame_id: mf.frame_id,
                expected_w: intrinsics.width(),
                expected_h: intrinsics.height(),
                actual_w: image.width(),
                actual_h: image.height(),
            }
            .into());
        }
        frames.push(FrameRecord {
            frame_id: mf.frame_id,
            pose,
            image,
        });
    }
    CaptureDataset::new(intrinsics, frames)
}
