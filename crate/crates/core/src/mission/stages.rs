use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::MissionConfig;
use super::report::{emit_report, MissionReport};
use crate::camera::{look_at, Pose};
use crate::dataset::{read_pose_dataset, write_pose_dataset, CaptureDataset, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::evaluator::{
    balance, evaluator_metrics, evaluator_train, fit_to_model, label_renders, read_labeled_set, write_labeled_set,
    EvaluatorMetrics, EvaluatorModel, LABELS_CSV,
};
use crate::geometry::{distance, Vec3};
use crate::image::RgbImage;
use crate::metrics::{psnr, ssim, SsimConfig};
use crate::nerf::{render_view, train, RadianceField, Sampling, TrainConfig};
use crate::planner::{
    evaluate_field, filter_abrupt_changes, plan_path, read_plan, sample_candidate_poses, select_low_quality,
    write_grid_csv, write_plan, ViewSpec, Waypoint,
};
use crate::rng;
use crate::scene::{capture, rectangular_trajectory, render_ground_truth, DegradationSpec, SceneSpec};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Capture1,
    TrainField1,
    EvaluatorData,
    TrainEvaluator,
    Plan,
    Capture2,
    TrainField2,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Capture1,
        Stage::TrainField1,
        Stage::EvaluatorData,
        Stage::TrainEvaluator,
        Stage::Plan,
        Stage::Capture2,
        Stage::TrainField2,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Capture1 => "capture-1",
            Stage::TrainField1 => "train-field-1",
            Stage::EvaluatorData => "evaluator-data",
            Stage::TrainEvaluator => "train-evaluator",
            Stage::Plan => "plan",
            Stage::Capture2 => "capture-2",
            Stage::TrainField2 => "train-field-2",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            Error::validation("stage", format!("unknown stage `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// File and directory names inside a mission output directory.
pub mod artifacts {
    pub const CAPTURE_1: &str = "capture_1";
    pub const CAPTURE_2: &str = "capture_2";
    pub const FIELD_1: &str = "field_1.ckpt";
    pub const FIELD_2: &str = "field_2.ckpt";
    pub const FIELD_1_LOSS: &str = "field_1_loss.csv";
    pub const FIELD_2_LOSS: &str = "field_2_loss.csv";
    pub const EVALUATOR_DATA: &str = "evaluator_data";
    pub const EVALUATOR_DATA_SUMMARY: &str = "evaluator_data/summary.json";
    pub const EVALUATOR: &str = "evaluator.ckpt";
    pub const EVALUATOR_HISTORY: &str = "evaluator_history.csv";
    pub const EVALUATOR_METRICS: &str = "evaluator_metrics.json";
    pub const GRID: &str = "grid.csv";
    pub const PLAN: &str = "plan.json";
    pub const PLAN_SUMMARY: &str = "plan_summary.json";
    pub const METRICS: &str = "metrics.csv";
    pub const QUANTILES: &str = "quantiles.csv";
    pub const CDF: &str = "cdf.csv";
    pub const CDF_PSNR_SVG: &str = "cdf_psnr.svg";
    pub const CDF_SSIM_SVG: &str = "cdf_ssim.svg";
    pub const CLOUD_1: &str = "cloud_1.ply";
    pub const CLOUD_2: &str = "cloud_2.ply";
    pub const REPORT: &str = "report.json";
    pub const TIMINGS: &str = "timings.json";
}

use artifacts as a;

/// What a stage needs on disk before it can run.
fn prerequisites(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Capture1 => &[],
        Stage::TrainField1 => &[a::CAPTURE_1],
        Stage::EvaluatorData => &[a::FIELD_1],
        Stage::TrainEvaluator => &[a::EVALUATOR_DATA],
        Stage::Plan => &[a::CAPTURE_1, a::FIELD_1, a::EVALUATOR],
        Stage::Capture2 => &[a::PLAN],
        Stage::TrainField2 => &[a::CAPTURE_1, a::CAPTURE_2],
        Stage::Evaluate => &[a::FIELD_1, a::FIELD_2, a::EVALUATOR],
        Stage::Report => &[a::METRICS, a::EVALUATOR_METRICS, a::PLAN_SUMMARY, a::FIELD_1, a::FIELD_2],
    }
}

/// Marker file that makes a dataset directory count as present.
fn artifact_path(out: &Path, name: &str) -> PathBuf {
    match name {
        a::CAPTURE_1 | a::CAPTURE_2 => out.join(name).join(MANIFEST_FILE),
        a::EVALUATOR_DATA => out.join(name).join(LABELS_CSV),
        _ => out.join(name),
    }
}

fn require(stage: Stage, out: &Path) -> Result<()> {
    for name in prerequisites(stage) {
        let p = artifact_path(out, name);
        if !p.exists() {
            return Err(Error::MissingArtifact {
                stage: stage.name().to_string(),
                path: p,
            });
        }
    }
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn stage_seed(cfg: &MissionConfig, name: &str) -> u64 {
    rng::derive(cfg.seed, &[rng::tag(name)])
}

fn field_train_config(cfg: &MissionConfig, which: u8) -> TrainConfig {
    let (base, name) = if which == 1 {
        (&cfg.field_1, "field-1")
    } else {
        (&cfg.field_2, "field-2")
    };
    TrainConfig {
        seed: rng::derive(cfg.seed, &[rng::tag(name), base.seed]),
        ..base.clone()
    }
}

fn render_field(cfg: &MissionConfig, field: &RadianceField, tc: &TrainConfig, pose: &Pose) -> Result<RgbImage> {
    Ok(render_view(
        field,
        pose,
        &cfg.intrinsics()?,
        cfg.render_samples,
        tc.near,
        tc.far,
        Sampling::Midpoint,
    ))
}

fn view_spec(cfg: &MissionConfig, tc: &TrainConfig) -> Result<ViewSpec> {
    Ok(ViewSpec {
        intrinsics: cfg.intrinsics()?,
        samples_per_ray: cfg.render_samples,
        near: tc.near,
        far: tc.far,
    })
}

fn looking_at_target(cfg: &MissionConfig, position: Vec3) -> Option<Pose> {
    look_at(position, cfg.trajectory.target, [0.0, 0.0, 1.0]).ok()
}

/// Evaluator-data poses: the lattice, then `jitter_copies` perturbed copies
/// of each lattice point. Undefined orientations are skipped.
pub fn evaluator_data_poses(cfg: &MissionConfig) -> Result<Vec<(String, Pose)>> {
    let d = &cfg.evaluator.dataset;
    let lattice = sample_candidate_poses(&d.lattice, cfg.trajectory.target)?;
    let mut r = rng::stream(stage_seed(cfg, "evaluator-poses"), &[]);
    let mut out = Vec::new();
    for c in &lattice {
        out.push(c.pose);
    }
    for c in &lattice {
        for _ in 0..d.jitter_copies {
            let p = c.pose.position();
            let mut n = || -> f64 { StandardNormal.sample(&mut r) };
            let q = [p[0] + d.jitter_sigma * n(), p[1] + d.jitter_sigma * n(), p[2] + d.jitter_sigma * n()];
            if let Some(pose) = looking_at_target(cfg, q) {
                out.push(pose);
            }
        }
    }
    Ok(out.into_iter().enumerate().map(|(i, p)| (format!("ev-{i:05}"), p)).collect())
}

/// The fixed held-out evaluation set: `count` seeded poses in a band
/// around the target, each at least `min_separation` from every trajectory,
/// evaluator-data and candidate position.
pub fn evaluation_poses(cfg: &MissionConfig) -> Result<Vec<(String, Pose)>> {
    let mut taken: Vec<Vec3> = rectangular_trajectory(&cfg.trajectory.rect, cfg.trajectory.frames, cfg.trajectory.target)?
        .iter()
        .map(|p| p.position())
        .collect();
    taken.extend(evaluator_data_poses(cfg)?.iter().map(|(_, p)| p.position()));
    taken.extend(
        sample_candidate_poses(&cfg.planner.grid, cfg.trajectory.target)?
            .iter()
            .map(|c| c.pose.position()),
    );
    let ev = &cfg.evaluation;
    let t = cfg.trajectory.target;
    let mut r = rng::stream(stage_seed(cfg, "evaluation-poses"), &[]);
    let mut out = Vec::with_capacity(ev.count);
    let mut attempts = 0usize;
    while out.len() < ev.count {
        attempts += 1;
        if attempts > 1000 * ev.count {
            return Err(Error::validation(
                "evaluation",
                "could not place enough poses clear of the training and candidate positions",
            ));
        }
        let angle = r.random_range(0.0..std::f64::consts::TAU);
        let radius = if ev.radius.0 < ev.radius.1 {
            r.random_range(ev.radius.0..ev.radius.1)
        } else {
            ev.radius.0
        };
        let z = if ev.height.0 < ev.height.1 {
            r.random_range(ev.height.0..ev.height.1)
        } else {
            ev.height.0
        };
        let p = [t[0] + radius * angle.cos(), t[1] + radius * angle.sin(), z];
        if taken.iter().any(|q| distance(p, *q) < ev.min_separation) {
            continue;
        }
        if let Some(pose) = looking_at_target(cfg, p) {
            out.push((format!("eval-{:03}", out.len()), pose));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorDataSummary {
    pub generated: usize,
    pub generated_low: usize,
    pub generated_high: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorReport {
    pub train_items: usize,
    pub test_items: usize,
    pub accuracy: f64,
    pub roc_auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSummary {
    pub candidates: usize,
    pub below_tau: usize,
    pub after_filter: usize,
    pub waypoints: usize,
    pub path_length: f64,
    pub mean_probability_in_region: Option<f64>,
    pub mean_probability_elsewhere: Option<f64>,
}

/// One evaluated pose in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub pose_id: String,
    pub position: Vec3,
    pub psnr_db: f64,
    pub ssim: f64,
    pub predicted_probability: f64,
    pub iteration: u8,
}

pub const METRICS_HEADER: &str = "pose_id,x,y,z,psnr_db,ssim,predicted_probability,iteration";

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.pose_id, r.position[0], r.position[1], r.position[2], r.psnr_db, r.ssim, r.predicted_probability, r.iteration
        )
        .expect("write to String");
    }
    fs::write(path, csv).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |n: usize, why: String| Error::validation(path.display().to_string(), format!("row {n}: {why}"));
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::validation(path.display().to_string(), "unexpected header"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(n + 1, "expected 8 fields".into()));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(n + 1, e.to_string()));
        rows.push(MetricRow {
            pose_id: f[0].to_string(),
            position: [num(1)?, num(2)?, num(3)?],
            psnr_db: num(4)?,
            ssim: num(5)?,
            predicted_probability: num(6)?,
            iteration: f[7].parse().map_err(|e: std::num::ParseIntError| bad(n + 1, e.to_string()))?,
        });
    }
    Ok(rows)
}

fn write_loss_csv(history: &[f64], path: &Path) -> Result<()> {
    let mut csv = String::from("block,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(csv, "{i},{l}").expect("write to String");
    }
    fs::write(path, csv).map_err(|e| Error::io(path, e))
}

fn capture_poses(
    scene: &SceneSpec,
    cfg: &MissionConfig,
    poses: &[Pose],
    deg: &DegradationSpec,
    prefix: &str,
) -> Result<CaptureDataset> {
    let intr = cfg.intrinsics()?;
    let seed = stage_seed(cfg, prefix);
    let frames = poses
        .iter()
        .enumerate()
        .map(|(i, p)| capture(scene, p, &intr, deg, cfg.oracle_samples, seed, &format!("{prefix}-{i:04}")))
        .collect::<Result<Vec<_>>>()?;
    CaptureDataset::new(intr, frames)
}

fn out_dir(cfg: &MissionConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::validation("output_dir", "no output directory given"))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Outcome of one stage.
#[derive(Debug, Clone)]
pub enum StageOutput {
    Done,
    Report(Box<MissionReport>),
}

/// Runs exactly one stage from the artifacts already in `out` (or the
/// config's `output_dir`), recording its wall-clock time in `timings.json`.
pub fn run_stage(cfg: &MissionConfig, stage: Stage, out: Option<&Path>) -> Result<StageOutput> {
    let dir = out_dir(cfg, out)?;
    require(stage, &dir)?;
    let started = Instant::now();
    let result = execute(cfg, stage, &dir).map_err(|e| match e {
        e @ Error::MissingArtifact { .. } => e,
        e => e.in_stage(stage.name()),
    })?;
    record_timing(&dir, stage, started.elapsed().as_secs_f64())?;
    Ok(result)
}

/// Every stage in order; stops at the first failure, leaving the artifacts
/// written so far in place.
pub fn run_mission(cfg: &MissionConfig, out: Option<&Path>) -> Result<MissionReport> {
    let mut report = None;
    for stage in Stage::ALL {
        if let StageOutput::Report(r) = run_stage(cfg, stage, out)? {
            report = Some(*r);
        }
    }
    Ok(report.expect("report stage runs last"))
}

fn record_timing(dir: &Path, stage: Stage, secs: f64) -> Result<()> {
    let path = dir.join(a::TIMINGS);
    let mut timings: BTreeMap<String, f64> = if path.is_file() {
        read_json(&path).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    timings.insert(stage.name().to_string(), secs);
    write_json(&path, &timings)
}

fn execute(cfg: &MissionConfig, stage: Stage, dir: &Path) -> Result<StageOutput> {
    match stage {
        Stage::Capture1 => {
            let scene = SceneSpec::load(&cfg.scene)?;
            let t = &cfg.trajectory;
            let poses = rectangular_trajectory(&t.rect, t.frames, t.target)?;
            let ds = capture_poses(&scene, cfg, &poses, &cfg.degradation, "p1")?;
            replace_dir(&dir.join(a::CAPTURE_1))?;
            write_pose_dataset(&ds, &dir.join(a::CAPTURE_1))?;
        }
        Stage::TrainField1 | Stage::TrainField2 => {
            let scene = SceneSpec::load(&cfg.scene)?;
            let first = read_pose_dataset(&dir.join(a::CAPTURE_1))?;
            let (ds, which, ckpt, loss) = if stage == Stage::TrainField1 {
                (first, 1, a::FIELD_1, a::FIELD_1_LOSS)
            } else {
                let second = read_pose_dataset(&dir.join(a::CAPTURE_2))?;
                (first.union(&second)?, 2, a::FIELD_2, a::FIELD_2_LOSS)
            };
            let tc = field_train_config(cfg, which);
            let outcome = train(&ds, scene.bounds, scene.background, &tc)?;
            outcome.field.save(&dir.join(ckpt))?;
            write_loss_csv(&outcome.loss_history, &dir.join(loss))?;
        }
        Stage::EvaluatorData => {
            let scene = SceneSpec::load(&cfg.scene)?;
            let field = RadianceField::load(&dir.join(a::FIELD_1))?;
            let tc = field_train_config(cfg, 1);
            let intr = cfg.intrinsics()?;
            let poses = evaluator_data_poses(cfg)?;
            let pairs = poses
                .par_iter()
                .map(|(id, pose)| {
                    let render = render_field(cfg, &field, &tc, pose)?;
                    let gt = render_ground_truth(&scene, pose, &intr, cfg.oracle_samples);
                    Ok(((render, id.clone()), gt))
                })
                .collect::<Result<Vec<_>>>()?;
            let (renders, gts): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let labeled = label_renders(renders, &gts)?;
            let (generated_low, generated_high) = labeled.class_counts();
            let set = balance(labeled, stage_seed(cfg, "evaluator-balance"))?;
            let target = dir.join(a::EVALUATOR_DATA);
            replace_dir(&target)?;
            write_labeled_set(&set, &target)?;
            write_json(
                &dir.join(a::EVALUATOR_DATA_SUMMARY),
                &EvaluatorDataSummary {
                    generated: generated_low + generated_high,
                    generated_low,
                    generated_high,
                    kept: set.len(),
                },
            )?;
        }
        Stage::TrainEvaluator => {
            let set = read_labeled_set(&dir.join(a::EVALUATOR_DATA))?;
            let (train_set, test_set) = set.split(cfg.evaluator.test_fraction, stage_seed(cfg, "evaluator-split"))?;
            let model = EvaluatorModel::init(cfg.evaluator.shape, stage_seed(cfg, "evaluator-init"))?;
            let mut tc = cfg.evaluator.train.clone();
            tc.seed = rng::derive(cfg.seed, &[rng::tag("evaluator-train"), tc.seed]);
            let (model, history) = evaluator_train(model, &train_set, &tc)?;
            model.save(&dir.join(a::EVALUATOR))?;
            let mut csv = String::from("epoch,loss,train_accuracy\n");
            for (i, h) in history.iter().enumerate() {
                writeln!(csv, "{},{},{}", i + 1, h.loss, h.accuracy).expect("write to String");
            }
            let p = dir.join(a::EVALUATOR_HISTORY);
            fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
            let EvaluatorMetrics { accuracy, roc_auc } = evaluator_metrics(&model, &test_set)?;
            write_json(
                &dir.join(a::EVALUATOR_METRICS),
                &EvaluatorReport {
                    train_items: train_set.len(),
                    test_items: test_set.len(),
                    accuracy,
                    roc_auc,
                },
            )?;
        }
        Stage::Plan => {
            let field = RadianceField::load(&dir.join(a::FIELD_1))?;
            let evaluator = EvaluatorModel::load(&dir.join(a::EVALUATOR))?;
            let first = read_pose_dataset(&dir.join(a::CAPTURE_1))?;
            let start = first
                .frames()
                .first()
                .map(|f| f.pose)
                .ok_or_else(|| Error::validation("capture_1", "first-pass dataset has no frames"))?;
            let pc = &cfg.planner;
            let candidates = sample_candidate_poses(&pc.grid, cfg.trajectory.target)?;
            let tc = field_train_config(cfg, 1);
            let grid = evaluate_field(&field, &evaluator, pc.grid, &candidates, &view_spec(cfg, &tc)?)?;
            write_grid_csv(&grid, &dir.join(a::GRID))?;
            let below = select_low_quality(&grid, pc.tau);
            let kept = filter_abrupt_changes(&grid, &below, pc.jump_threshold);
            let waypoints: Vec<Waypoint> = kept
                .iter()
                .map(|&i| Waypoint {
                    index: grid.entries[i].index,
                    pose: grid.entries[i].pose,
                })
                .collect();
            let plan = plan_path(&start, &waypoints);
            write_plan(&plan, &dir.join(a::PLAN))?;
            let region = cfg.degradation.region.as_ref();
            let mean = |inside: bool| -> Option<f64> {
                let region = region?;
                let ps: Vec<f64> = grid
                    .entries
                    .iter()
                    .filter(|e| region.contains(e.pose.position()) == inside)
                    .map(|e| e.probability)
                    .collect();
                (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64)
            };
            write_json(
                &dir.join(a::PLAN_SUMMARY),
                &PlanSummary {
                    candidates: grid.entries.len(),
                    below_tau: below.len(),
                    after_filter: kept.len(),
                    waypoints: plan.waypoints.len(),
                    path_length: plan.path_length,
                    mean_probability_in_region: mean(true),
                    mean_probability_elsewhere: mean(false),
                },
            )?;
        }
        Stage::Capture2 => {
            let scene = SceneSpec::load(&cfg.scene)?;
            let plan = read_plan(&dir.join(a::PLAN))?;
            let poses: Vec<Pose> = plan.waypoints.iter().map(|w| w.pose).collect();
            let deg = if cfg.second_pass.reuse_degradation {
                cfg.degradation.clone()
            } else {
                DegradationSpec::none()
            };
            let ds = capture_poses(&scene, cfg, &poses, &deg, "p2")?;
            replace_dir(&dir.join(a::CAPTURE_2))?;
            write_pose_dataset(&ds, &dir.join(a::CAPTURE_2))?;
        }
        Stage::Evaluate => {
            let scene = SceneSpec::load(&cfg.scene)?;
            let intr = cfg.intrinsics()?;
            let fields = [
                (RadianceField::load(&dir.join(a::FIELD_1))?, field_train_config(cfg, 1)),
                (RadianceField::load(&dir.join(a::FIELD_2))?, field_train_config(cfg, 2)),
            ];
            let evaluator = EvaluatorModel::load(&dir.join(a::EVALUATOR))?;
            let poses = evaluation_poses(cfg)?;
            let ssim_cfg = SsimConfig::default();
            let per_pose = poses
                .par_iter()
                .map(|(id, pose)| {
                    let gt = render_ground_truth(&scene, pose, &intr, cfg.oracle_samples);
                    let mut rows = Vec::with_capacity(2);
                    for (k, (field, tc)) in fields.iter().enumerate() {
                        let img = render_field(cfg, field, tc, pose)?;
                        rows.push(MetricRow {
                            pose_id: id.clone(),
                            position: pose.position(),
                            psnr_db: psnr(&img, &gt, 1.0)?.db(),
                            ssim: ssim(&img, &gt, &ssim_cfg)?,
                            predicted_probability: evaluator.predict(&fit_to_model(&evaluator, &img))?,
                            iteration: k as u8 + 1,
                        });
                    }
                    Ok(rows)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rows: Vec<MetricRow> = per_pose.into_iter().flatten().collect();
            rows.sort_by_key(|r| r.iteration);
            write_metrics_csv(&rows, &dir.join(a::METRICS))?;
        }
        Stage::Report => {
            let report = emit_report(cfg, dir)?;
            return Ok(StageOutput::Report(Box::new(report)));
        }
    }
    Ok(StageOutput::Done)
}

/// Clears a dataset directory so stale frames never survive a re-run.
fn replace_dir(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Loads a posed-image dataset from a foreign directory.
pub fn ingest_external_dataset(directory: &Path) -> Result<CaptureDataset> {
    read_pose_dataset(directory)
}

/// Copies an external dataset into `out` as the first-pass capture, so
/// the training and planning stages can run on it.
pub fn install_first_pass(dataset: &CaptureDataset, out: &Path) -> Result<()> {
    let target = out.join(a::CAPTURE_1);
    replace_dir(&target)?;
    write_pose_dataset(dataset, &target)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            MetricRow {
                pose_id: "eval-000".into(),
                position: [0.1, -2.0 / 3.0, 1.25],
                psnr_db: 23.456789,
                ssim: 0.9123,
                predicted_probability: 0.75,
                iteration: 1,
            },
            MetricRow {
                pose_id: "eval-000".into(),
                position: [0.1, -2.0 / 3.0, 1.25],
                psnr_db: f64::INFINITY,
                ssim: 1.0,
                predicted_probability: 0.5,
                iteration: 2,
            },
        ];
        let p = dir.path().join("m.csv");
        write_metrics_csv(&rows, &p).unwrap();
        assert_eq!(read_metrics_csv(&p).unwrap(), rows);
    }
}
