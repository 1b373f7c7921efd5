use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::image::RgbImage;
use crate::metrics::{psnr, ssim, SsimConfig};
use crate::rng;

pub const PSNR_THRESHOLD_DB: f64 = 20.0;
pub const SSIM_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QualityLabel {
    Low = 0,
    High = 1,
}

impl QualityLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Low),
            1 => Some(Self::High),
            _ => None,
        }
    }
}

/// High quality only when both metrics clear their thresholds.
pub fn label_render(psnr_db: f64, ssim: f64) -> QualityLabel {
    if ssim >= SSIM_THRESHOLD && psnr_db >= PSNR_THRESHOLD_DB {
        QualityLabel::High
    } else {
        QualityLabel::Low
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRender {
    pub pose_id: String,
    pub image: RgbImage,
    pub psnr_db: f64,
    pub ssim: f64,
    pub label: QualityLabel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledRenderSet {
    pub items: Vec<LabeledRender>,
}

impl LabeledRenderSet {
    /// `(low, high)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let high = self.items.iter().filter(|i| i.label == QualityLabel::High).count();
        (self.items.len() - high, high)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let (low, high) = self.class_counts();
        if low == 0 || high == 0 {
            let label = if high > 0 { 1 } else { 0 };
            return Err(Error::SingleClass {
                label,
                count: self.items.len(),
            });
        }
        Ok(())
    }

    /// Seeded stratified split: `test_fraction` of each class (rounded) goes
    /// to the second set. Item order is preserved within each set.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(LabeledRenderSet, LabeledRenderSet)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::validation("test_fraction", "must be in [0, 1)"));
        }
        let mut in_test = vec![false; self.items.len()];
        for class in [QualityLabel::Low, QualityLabel::High] {
            let mut idx: Vec<usize> = (0..self.items.len()).filter(|&i| self.items[i].label == class).collect();
            let mut r = rng::stream(seed, &[rng::tag("split"), class.as_u8() as u64]);
            idx.shuffle(&mut r);
            let n_test = (idx.len() as f64 * test_fraction).round() as usize;
            for &i in &idx[..n_test] {
                in_test[i] = true;
            }
        }
        let mut train = LabeledRenderSet::default();
        let mut test = LabeledRenderSet::default();
        for (item, t) in self.items.iter().zip(in_test) {
            if t {
                test.items.push(item.clone());
            } else {
                train.items.push(item.clone());
            }
        }
        Ok((train, test))
    }
}

/// Labels each render against its ground truth, then down-samples the
/// majority class (seeded, order-preserving) to the minority count.
pub fn build_training_set(
    renders: Vec<(RgbImage, String)>,
    ground_truth: &[RgbImage],
    seed: u64,
) -> Result<LabeledRenderSet> {
    balance(label_renders(renders, ground_truth)?, seed)
}

/// Labels each `(render, pose id)` by its PSNR and SSIM against the
/// matching ground truth.
pub fn label_renders(renders: Vec<(RgbImage, String)>, ground_truth: &[RgbImage]) -> Result<LabeledRenderSet> {
    if renders.len() != ground_truth.len() {
        return Err(Error::validation(
            "ground_truth",
            format!("{} references for {} renders", ground_truth.len(), renders.len()),
        ));
    }
    let cfg = SsimConfig::default();
    let mut items = Vec::with_capacity(renders.len());
    for ((image, pose_id), gt) in renders.into_iter().zip(ground_truth) {
        let p = psnr(&image, gt, 1.0)?.db();
        let s = ssim(&image, gt, &cfg)?;
        items.push(LabeledRender {
            pose_id,
            image,
            psnr_db: p,
            ssim: s,
            label: label_render(p, s),
        });
    }
    Ok(LabeledRenderSet { items })
}

/// Down-samples the majority class to the minority size.
pub fn balance(set: LabeledRenderSet, seed: u64) -> Result<LabeledRenderSet> {
    set.require_both_classes()?;
    let (low, high) = set.class_counts();
    let (majority, keep) = if low > high {
        (QualityLabel::Low, high)
    } else {
        (QualityLabel::High, low)
    };
    let mut idx: Vec<usize> = (0..set.items.len()).filter(|&i| set.items[i].label == majority).collect();
    let mut r = rng::stream(seed, &[rng::tag("balance")]);
    idx.shuffle(&mut r);
    let mut drop = vec![false; set.items.len()];
    for &i in &idx[keep..] {
        drop[i] = true;
    }
    let items = set
        .items
        .into_iter()
        .zip(drop)
        .filter_map(|(item, d)| (!d).then_some(item))
        .collect();
    Ok(LabeledRenderSet { items })
}

pub const LABELS_CSV: &str = "labels.csv";
const LABELS_HEADER: &str = "pose_id,image_path,psnr_db,ssim,label";

/// Writes `labels.csv` and one PNG per item into `directory`. Images are
/// quantized to 8 bits, as with capture datasets.
pub fn write_labeled_set(set: &LabeledRenderSet, directory: &Path) -> Result<()> {
    let images = directory.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut csv = String::from(LABELS_HEADER);
    csv.push('\n');
    for item in &set.items {
        let rel = format!("images/{}.png", item.pose_id);
        item.image.save_png(&directory.join(&rel))?;
        writeln!(csv, "{},{},{},{},{}", item.pose_id, rel, item.psnr_db, item.ssim, item.label.as_u8())
            .expect("write to String");
    }
    let path = directory.join(LABELS_CSV);
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

pub fn read_labeled_set(directory: &Path) -> Result<LabeledRenderSet> {
    let path = directory.join(LABELS_CSV);
    if !path.is_file() {
        return Err(LoadError::MissingManifest(path).into());
    }
    let corrupt = |reason: String| -> Error {
        LoadError::CorruptManifest {
            path: path.clone(),
            reason,
        }
        .into()
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(LABELS_HEADER) {
        return Err(corrupt(format!("expected header `{LABELS_HEADER}`")));
    }
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [pose_id, rel, p, s, l] = fields[..] else {
            return Err(corrupt(format!("row {}: expected 5 fields", n + 1)));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|e| corrupt(format!("row {}: {e}", n + 1)));
        let label = l
            .parse::<u8>()
            .ok()
            .and_then(QualityLabel::from_u8)
            .ok_or_else(|| corrupt(format!("row {}: bad label `{l}`", n + 1)))?;
        let image_path = directory.join(rel);
        if !image_path.is_file() {
            return Err(LoadError::MissingImage {
                frame_id: pose_id.to_string(),
                path: image_path,
            }
            .into());
        }
        let image = RgbImage::load_png(&image_path).map_err(|reason| LoadError::BadImage {
            frame_id: pose_id.to_string(),
            path: image_path.clone(),
            reason,
        })?;
        items.push(LabeledRender {
            pose_id: pose_id.to_string(),
            image,
            psnr_db: num(p)?,
            ssim: num(s)?,
            label,
        });
    }
    Ok(LabeledRenderSet { items })
}
