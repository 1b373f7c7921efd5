use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::MissionConfig;
use super::stages::{artifacts as a, read_json, read_metrics_csv, write_json, EvaluatorReport, MetricRow, PlanSummary};
use crate::dataset::read_pose_dataset;
use crate::error::{Error, Result};
use crate::metrics::{cdf, quantile};
use crate::nerf::{extract_point_cloud, write_ply, RadianceField};
use crate::scene::SceneSpec;

/// Quantiles reported for each iteration's PSNR distribution.
pub const REPORT_QUANTILES: [f64; 3] = [0.25, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub q: f64,
    pub iteration_1: f64,
    pub iteration_2: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub training_frames: usize,
    pub mean_psnr_db: f64,
    pub median_psnr_db: f64,
    pub median_ssim: f64,
    pub point_cloud_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionReport {
    pub evaluated_poses: usize,
    pub psnr_quantiles: Vec<QuantileRow>,
    pub ssim_quantiles: Vec<QuantileRow>,
    pub iterations: [IterationSummary; 2],
    pub evaluator: EvaluatorReport,
    pub plan: PlanSummary,
    /// Per-pose rows of both iterations (also in `metrics.csv`).
    #[serde(skip)]
    pub rows: Vec<MetricRow>,
    /// Seconds per stage, from `timings.json`; kept out of `report.json`
    /// so the report is reproducible byte for byte.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

fn column(rows: &[MetricRow], iteration: u8, f: impl Fn(&MetricRow) -> f64) -> Vec<f64> {
    rows.iter().filter(|r| r.iteration == iteration).map(f).collect()
}

fn quantile_rows(a: &[f64], b: &[f64]) -> Result<Vec<QuantileRow>> {
    REPORT_QUANTILES
        .iter()
        .map(|&q| {
            let (x, y) = (quantile(a, q)?, quantile(b, q)?);
            Ok(QuantileRow {
                q,
                iteration_1: x,
                iteration_2: y,
                delta: y - x,
            })
        })
        .collect()
}

/// Writes every report artifact from the persisted stage outputs.
pub fn emit_report(cfg: &MissionConfig, dir: &Path) -> Result<MissionReport> {
    let rows = read_metrics_csv(&dir.join(a::METRICS))?;
    let psnr = [column(&rows, 1, |r| r.psnr_db), column(&rows, 2, |r| r.psnr_db)];
    let ssim = [column(&rows, 1, |r| r.ssim), column(&rows, 2, |r| r.ssim)];
    if psnr[0].is_empty() || psnr[1].is_empty() {
        return Err(Error::validation("metrics.csv", "rows for both iterations are required"));
    }

    let psnr_quantiles = quantile_rows(&psnr[0], &psnr[1])?;
    let ssim_quantiles = quantile_rows(&ssim[0], &ssim[1])?;
    let mut qcsv = String::from("metric,q,iteration_1,iteration_2,delta\n");
    for (metric, table) in [("psnr_db", &psnr_quantiles), ("ssim", &ssim_quantiles)] {
        for r in table {
            writeln!(qcsv, "{metric},{},{},{},{}", r.q, r.iteration_1, r.iteration_2, r.delta).expect("write to String");
        }
    }
    write_file(&dir.join(a::QUANTILES), &qcsv)?;

    let mut ccsv = String::from("metric,iteration,value,fraction\n");
    let mut curves: BTreeMap<&str, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for (metric, cols) in [("psnr_db", &psnr), ("ssim", &ssim)] {
        for (k, col) in cols.iter().enumerate() {
            let c = cdf(col)?;
            for (v, f) in &c {
                writeln!(ccsv, "{metric},{},{v},{f}", k + 1).expect("write to String");
            }
            curves.entry(metric).or_default().push(c);
        }
    }
    write_file(&dir.join(a::CDF), &ccsv)?;
    write_file(&dir.join(a::CDF_PSNR_SVG), &cdf_svg(&curves["psnr_db"], "PSNR CDF", "PSNR (dB)"))?;
    write_file(&dir.join(a::CDF_SSIM_SVG), &cdf_svg(&curves["ssim"], "SSIM CDF", "SSIM"))?;

    let scene = SceneSpec::load(&cfg.scene)?;
    let mut cloud_sizes = [0; 2];
    for (k, (ckpt, ply)) in [(a::FIELD_1, a::CLOUD_1), (a::FIELD_2, a::CLOUD_2)].into_iter().enumerate() {
        let field = RadianceField::load(&dir.join(ckpt))?;
        let cloud = extract_point_cloud(
            &field,
            &scene.bounds,
            cfg.report.point_cloud_resolution,
            cfg.report.sigma_threshold,
        )?;
        write_ply(&cloud, &dir.join(ply))?;
        cloud_sizes[k] = cloud.len();
    }

    let first = read_pose_dataset(&dir.join(a::CAPTURE_1))?.len();
    let second_dir = dir.join(a::CAPTURE_2);
    let second = if second_dir.exists() {
        read_pose_dataset(&second_dir)?.len()
    } else {
        0
    };
    let summary = |k: usize, frames: usize| -> Result<IterationSummary> {
        Ok(IterationSummary {
            training_frames: frames,
            mean_psnr_db: psnr[k].iter().sum::<f64>() / psnr[k].len() as f64,
            median_psnr_db: quantile(&psnr[k], 0.5)?,
            median_ssim: quantile(&ssim[k], 0.5)?,
            point_cloud_points: cloud_sizes[k],
        })
    };
    let report = MissionReport {
        evaluated_poses: psnr[0].len(),
        psnr_quantiles,
        ssim_quantiles,
        iterations: [summary(0, first)?, summary(1, first + second)?],
        evaluator: read_json(&dir.join(a::EVALUATOR_METRICS))?,
        plan: read_json(&dir.join(a::PLAN_SUMMARY))?,
        rows,
        timings: read_json(&dir.join(a::TIMINGS)).unwrap_or_default(),
    };
    write_json(&dir.join(a::REPORT), &report)?;
    Ok(report)
}

/// Reads `report.json` and the per-pose rows back from a finished run.
pub fn load_report(dir: &Path) -> Result<MissionReport> {
    let path = dir.join(a::REPORT);
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            stage: "report".into(),
            path,
        });
    }
    let mut report: MissionReport = read_json(&path)?;
    report.rows = read_metrics_csv(&dir.join(a::METRICS))?;
    report.timings = read_json(&dir.join(a::TIMINGS)).unwrap_or_default();
    Ok(report)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Step plot of one CDF per iteration, overlaid.
pub fn cdf_svg(curves: &[Vec<(f64, f64)>], title: &str, x_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    const COLORS: [&str; 2] = ["#1f77b4", "#ff7f0e"];
    let finite = curves.iter().flatten().map(|p| p.0).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let sx = |v: f64| L + (v.clamp(lo, hi) - lo) / (hi - lo) * (W - L - R);
    let sy = |f: f64| H - B - f * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#,
        H - B,
        W - R,
        H - B,
        H - B
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let v = lo + f * (hi - lo);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="black"/><text x="{x:.2}" y="{ty}" text-anchor="middle">{v:.2}</text>"#,
            x = sx(v),
            y0 = H - B,
            y1 = H - B + 5.0,
            ty = H - B + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y:.2}" x2="{L}" y2="{y:.2}" stroke="black"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{f:.2}</text>"#,
            x0 = L - 5.0,
            y = sy(f),
            tx = L - 8.0,
            ty = sy(f) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>
<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">Cumulative fraction</text>"#,
        (L + W - R) / 2.0,
        H - 15.0,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );
    for (k, curve) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        let mut prev = 0.0;
        for &(v, f) in curve {
            let _ = write!(pts, "{:.2},{:.2} {:.2},{:.2} ", sx(v), sy(prev), sx(v), sy(f));
            prev = f;
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = T + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{ly}" x2="{x1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">Iteration {n}</text>"#,
            x0 = L + 15.0,
            x1 = L + 40.0,
            tx = L + 46.0,
            ty = ly + 4.0,
            n = k + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One gated threshold of `mission report --check`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCheck {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Quantile gains of at least 1 dB at q = 0.1 and 0.05, a median loss of at
/// most 0.25 dB, evaluator accuracy ≥ 0.90 and ROC AUC ≥ 0.95.
pub fn check_thresholds(report: &MissionReport) -> Vec<ThresholdCheck> {
    let delta_at = |q: f64| {
        report
            .psnr_quantiles
            .iter()
            .find(|r| r.q == q)
            .map_or(f64::NAN, |r| r.delta)
    };
    let median_delta = report.iterations[1].median_psnr_db - report.iterations[0].median_psnr_db;
    let at_least = |name, value: f64, threshold| ThresholdCheck {
        name,
        value,
        threshold,
        passed: value >= threshold,
    };
    vec![
        at_least("psnr_q0.10_delta_db", delta_at(0.1), 1.0),
        at_least("psnr_q0.05_delta_db", delta_at(0.05), 1.0),
        at_least("median_psnr_delta_db", median_delta, -0.25),
        at_least("evaluator_accuracy", report.evaluator.accuracy, 0.90),
        at_least("evaluator_roc_auc", report.evaluator.roc_auc, 0.95),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_both_curves() {
        let c1 = vec![(10.0, 0.5), (12.0, 1.0)];
        let c2 = vec![(11.0, 0.25), (13.0, 1.0)];
        let s = cdf_svg(&[c1, c2], "PSNR CDF", "PSNR (dB)");
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("PSNR (dB)") && s.contains("Cumulative fraction"));
        assert!(s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_survives_degenerate_ranges() {
        let s = cdf_svg(&[vec![(f64::INFINITY, 1.0)], vec![(5.0, 1.0)]], "t", "x");
        assert!(!s.contains("NaN"));
    }
}
