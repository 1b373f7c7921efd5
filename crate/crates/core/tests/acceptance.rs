//! Acceptance suite. Runs every criterion in order inside one test so the
//! runtime budgets are measured without other tests competing for cores,
//! prints one PASS/FAIL line per criterion, then fails if any criterion did.
//!
//! The closed-loop criteria run the default mission for five seeds plus a
//! rerun (about 80 minutes on a single core). Set `ACCEPTANCE_CRITERIA` to a
//! comma-separated list such as `3,4` to run a subset; skipped criteria are
//! reported as such.

mod common;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use recapture::camera::{look_at, pixel_ray, Intrinsics, Pose};
use recapture::dataset::{read_pose_dataset, write_pose_dataset, MANIFEST_FILE};
use recapture::evaluator::{label_render, DropoutMasks, EvaluatorModel, EvaluatorShape, QualityLabel};
use recapture::geometry::{distance, Aabb, IDENTITY3};
use recapture::image::RgbImage;
use recapture::mission::{artifacts, check_thresholds, run_mission, MissionConfig, MissionReport};
use recapture::nerf::{batch_loss, batch_loss_and_grad, composite, FieldArch, RadianceField, SampledRay};
use recapture::planner::{
    filter_abrupt_changes, plan_path, read_plan, select_low_quality, write_plan, GridEntry, GridIndex, GridSpec,
    ProbabilityGrid, Waypoint,
};
use recapture::metrics::{psnr, ssim, SsimConfig};
use recapture::rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    passed: bool,
    detail: String,
}

fn say(line: &str) {
    // Straight to the process stderr so the lines survive output capture.
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

// ---- criterion 3 ---------------------------------------------------------

fn field_problem(seed: u64) -> (RadianceField, Vec<SampledRay>, Vec<[f64; 3]>) {
    let mut r = rng::stream(seed, &[rng::tag("field-fd")]);
    let arch = FieldArch {
        encoding_levels: r.random_range(1..4),
        hidden_width: r.random_range(4..9),
        hidden_layers: r.random_range(1..4),
    };
    let bounds = Aabb::new([-1.0; 3], [1.0; 3]);
    let mut field = RadianceField::init(arch, bounds, [r.random(), r.random(), r.random()], seed).unwrap();
    for p in field.params_mut() {
        *p += 0.1 * r.random_range(-1.0..1.0);
    }
    let intr = Intrinsics::new(8, 8, 1.0).unwrap();
    let pose = look_at([2.2, 1.4, 1.1], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
    let mut rays = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..6 {
        let ray = pixel_ray(&intr, &pose, r.random_range(0..8), r.random_range(0..8)).unwrap();
        rays.push(SampledRay::new(&bounds, ray, 0.1, 10.0, 8, Some(&mut r)));
        targets.push([r.random(), r.random(), r.random()]);
    }
    (field, rays, targets)
}

fn field_fd(seed: u64) -> common::FdReport {
    let (field, rays, targets) = field_problem(seed);
    let (base, grad) = batch_loss_and_grad(&field, &rays, &targets);
    let mut work = field.clone();
    common::check_gradient(
        &grad,
        0..field.param_count(),
        1e-4,
        1e-4,
        |i, d| {
            let orig = work.params()[i];
            work.params_mut()[i] = orig + d;
            let l = batch_loss(&work, &rays, &targets);
            work.params_mut()[i] = orig;
            l
        },
        base,
    )
}

fn evaluator_fd(seed: u64) -> common::FdReport {
    let mut r = rng::stream(seed, &[rng::tag("evaluator-fd")]);
    let shape = EvaluatorShape {
        height: 8,
        width: 8,
        fc1: r.random_range(3..7),
        fc2: r.random_range(2..5),
    };
    let mut model = EvaluatorModel::init(shape, seed).unwrap();
    for p in model.params_mut() {
        *p += 0.05 * r.random_range(-1.0..1.0);
    }
    let image = RgbImage::from_fn(8, 8, |_, _| [r.random(), r.random(), r.random()]);
    let refs = [&image];
    let labels = [(seed % 2) as f64];
    let masks = DropoutMasks::sample(&shape, 1, &mut r);
    let (base, grad) = model.loss_and_grad(&refs, &labels, Some(&masks)).unwrap();
    let mut work = model.clone();
    common::check_gradient(
        &grad,
        0..model.param_count(),
        1e-4,
        1e-4,
        |i, d| {
            let orig = work.params()[i];
            work.params_mut()[i] = orig + d;
            let l = work.loss(&refs, &labels, Some(&masks)).unwrap();
            work.params_mut()[i] = orig;
            l
        },
        base,
    )
}

fn gradient_oracles() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut worst = [0.0f64; 2];
    let mut kinks = 0;
    for seed in 0..5 {
        for (k, rep) in [field_fd(seed), evaluator_fd(seed)].into_iter().enumerate() {
            ok &= rep.passed(1e-4);
            worst[k] = worst[k].max(rep.worst);
            kinks += rep.kinks;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: ok && within(elapsed, 120),
        detail: format!(
            "max rel err field {:.2e}, evaluator {:.2e} (< 1e-4, 5 configs each, {kinks} kink stencils); {:.1}s (≤ 120s)",
            worst[0],
            worst[1],
            elapsed.as_secs_f64()
        ),
    }
}

// ---- criterion 4 ---------------------------------------------------------

fn brute_psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..3 {
                sum += (p[c] - q[c]).powi(2);
                n += 1;
            }
        }
    }
    10.0 * (1.0 / (sum / n as f64)).log10()
}

/// Direct windowed SSIM: every 11×11 position, 2-D Gaussian weights built
/// from scratch, moments summed in one pass.
fn brute_ssim(a: &RgbImage, b: &RgbImage) -> f64 {
    let luma = |p: [f64; 3]| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    let mut w = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (ow, oh) = (a.width() - 10, a.height() - 10);
    let mut acc = 0.0;
    for y0 in 0..oh {
        for x0 in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = w[i][j] / total;
                    let p = luma(a.pixel(x0 + j, y0 + i));
                    let q = luma(b.pixel(x0 + j, y0 + i));
                    ma += k * p;
                    mb += k * q;
                    saa += k * p * p;
                    sbb += k * q * q;
                    sab += k * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    acc / (ow * oh) as f64
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(4, &[rng::tag("metric-oracles")]);
    let cfg = SsimConfig::default();
    let (mut dp, mut ds, mut self_ssim) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let a = RgbImage::from_fn(64, 64, |_, _| [r.random(), r.random(), r.random()]);
        let noise: f64 = r.random_range(0.02..0.3);
        let b = RgbImage::from_fn(64, 64, |x, y| {
            let p = a.pixel(x, y);
            p.map(|v| (v + noise * r.random_range(-1.0..1.0)).clamp(0.0, 1.0))
        });
        dp = dp.max((psnr(&a, &b, 1.0).unwrap().db() - brute_psnr(&a, &b)).abs());
        ds = ds.max((ssim(&a, &b, &cfg).unwrap() - brute_ssim(&a, &b)).abs());
        self_ssim = self_ssim.max((ssim(&a, &a, &cfg).unwrap() - 1.0).abs());
    }
    let base = RgbImage::from_fn(64, 64, |x, y| [0.1 + 0.7 * (x as f64 / 63.0), 0.5, 0.2 + 0.6 * (y as f64 / 63.0)]);
    let shifted = RgbImage::from_fn(64, 64, |x, y| base.pixel(x, y).map(|v| v + 0.1));
    let p20 = psnr(&base, &shifted, 1.0).unwrap().db();
    let elapsed = start.elapsed();
    // (v + 0.1) − v is not exactly 0.1 in binary; 1e-12 dB absorbs that.
    let passed = dp < 1e-10 && ds < 1e-8 && (p20 - 20.0).abs() < 1e-12 && self_ssim < 1e-12 && within(elapsed, 60);
    Outcome {
        passed,
        detail: format!(
            "20 pairs: |ΔPSNR| {dp:.1e} (< 1e-10), |ΔSSIM| {ds:.1e} (< 1e-8); PSNR(a, a+0.1) = {p20:.15} (20 ± 1e-12); \
             |SSIM(a,a) − 1| {self_ssim:.1e} (< 1e-12); {:.1}s (≤ 60s)",
            elapsed.as_secs_f64()
        ),
    }
}

// ---- criterion 5 ---------------------------------------------------------

fn rendering_invariants() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(5, &[rng::tag("render-invariants")]);
    let mut worst_sum = 0.0f64;
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let n = r.random_range(1..65);
        // Mix dense, sparse and exactly empty samples.
        let sigmas: Vec<f64> = (0..n)
            .map(|_| match r.random_range(0..4) {
                0 => 0.0,
                1 => r.random_range(0.0..1.0),
                2 => r.random_range(0.0..50.0),
                _ => r.random_range(0.0..1e4),
            })
            .collect();
        let colors: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
        let deltas: Vec<f64> = (0..n).map(|_| r.random_range(1e-4..0.5)).collect();
        let bg = [r.random(), r.random(), r.random()];
        let out = composite(&sigmas, &colors, &deltas, bg);
        let sum: f64 = out.weights.iter().sum::<f64>() + out.transmittance_final;
        worst_sum = worst_sum.max((sum - 1.0).abs());
        if out.weights.iter().any(|&w| w < 0.0) {
            violations += 1;
        }
        let mut ts = out.transmittance.clone();
        ts.push(out.transmittance_final);
        if ts.windows(2).any(|p| p[1] > p[0]) {
            violations += 1;
        }
        let empty = composite(&vec![0.0; n], &colors, &deltas, bg);
        if empty.color != bg {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: worst_sum < 1e-9 && violations == 0 && within(elapsed, 60),
        detail: format!(
            "10^4 sequences: max |Σw + T − 1| {worst_sum:.1e} (< 1e-9), {violations} sign/monotonicity/background \
             violations; {:.1}s (≤ 60s)",
            elapsed.as_secs_f64()
        ),
    }
}

// ---- criterion 6 ---------------------------------------------------------

fn brute_filter(cells: &[(GridIndex, f64)], selected: &[usize], jump: f64) -> Vec<usize> {
    selected
        .iter()
        .copied()
        .filter(|&s| {
            let (idx, p) = cells[s];
            cells.iter().all(|&(other, q)| {
                let manhattan: usize = (0..3).map(|a| idx[a].abs_diff(other[a])).sum();
                manhattan != 1 || (p - q).abs() <= jump
            })
        })
        .collect()
}

fn point_pose(p: [f64; 3]) -> Pose {
    Pose::new(IDENTITY3, p).unwrap()
}

/// Independent greedy simulation with explicit tie handling.
fn simulate_greedy(start: [f64; 3], pts: &[(GridIndex, [f64; 3])]) -> (Vec<GridIndex>, f64) {
    let mut left: Vec<(GridIndex, [f64; 3])> = pts.to_vec();
    let mut here = start;
    let mut order = Vec::new();
    let mut length = 0.0;
    while !left.is_empty() {
        let d_min = left.iter().map(|(_, p)| distance(here, *p)).fold(f64::INFINITY, f64::min);
        let pick = left
            .iter()
            .enumerate()
            .filter(|(_, (_, p))| distance(here, *p) == d_min)
            .min_by_key(|(_, (idx, _))| *idx)
            .map(|(k, _)| k)
            .unwrap();
        let (idx, p) = left.remove(pick);
        length += d_min;
        here = p;
        order.push(idx);
    }
    (order, length)
}

fn optimal_length(start: [f64; 3], pts: &[[f64; 3]]) -> f64 {
    fn go(here: [f64; 3], left: &mut Vec<[f64; 3]>, acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if left.is_empty() {
            *best = acc;
            return;
        }
        for k in 0..left.len() {
            let p = left.swap_remove(k);
            go(p, left, acc + distance(here, p), best);
            left.push(p);
            let last = left.len() - 1;
            left.swap(k, last);
        }
    }
    let mut best = f64::INFINITY;
    go(start, &mut pts.to_vec(), 0.0, &mut best);
    best
}

fn planner_oracles() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(6, &[rng::tag("planner-oracles")]);
    let mut filter_mismatch = 0;
    let spec = GridSpec {
        bounds: Aabb::new([0.0; 3], [3.0, 3.0, 0.0]),
        increment: 1.0,
    };
    for _ in 0..50 {
        let cells: Vec<(GridIndex, f64)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| [i, j, 0]))
            .map(|idx| (idx, (r.random_range(0..=20) as f64) / 20.0))
            .collect();
        let grid = ProbabilityGrid {
            spec,
            entries: cells
                .iter()
                .map(|&(index, probability)| GridEntry {
                    index,
                    pose: point_pose(spec.position(index)),
                    probability,
                })
                .collect(),
        };
        let tau = r.random_range(0.3..0.9);
        let jump = r.random_range(0.1..0.6);
        let selected = select_low_quality(&grid, tau);
        let brute_selected: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].1 < tau).collect();
        if selected != brute_selected || filter_abrupt_changes(&grid, &selected, jump) != brute_filter(&cells, &selected, jump) {
            filter_mismatch += 1;
        }
    }

    let (mut sim_mismatch, mut below_optimum, mut collinear_gap) = (0, 0, 0.0f64);
    for case in 0..60 {
        let n = r.random_range(1..=7);
        let collinear = case % 3 == 0;
        let pts: Vec<(GridIndex, [f64; 3])> = (0..n)
            .map(|k| {
                let p = if collinear {
                    [r.random_range(-5.0..5.0), 0.0, 0.0]
                } else {
                    [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(0.0..2.0)]
                };
                ([k, 0, 0], p)
            })
            .collect();
        // Collinear starts sit at an end of the segment, where greedy is optimal.
        let s = if collinear {
            [-6.0, 0.0, 0.0]
        } else {
            [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), 1.0]
        };
        let wps: Vec<Waypoint> = pts.iter().map(|&(index, p)| Waypoint { index, pose: point_pose(p) }).collect();
        let plan = plan_path(&point_pose(s), &wps);
        let (order, length) = simulate_greedy(s, &pts);
        let got: Vec<GridIndex> = plan.waypoints.iter().map(|w| w.index).collect();
        if got != order || (plan.path_length - length).abs() > 1e-12 {
            sim_mismatch += 1;
        }
        let opt = optimal_length(s, &pts.iter().map(|x| x.1).collect::<Vec<_>>());
        if plan.path_length < opt - 1e-12 {
            below_optimum += 1;
        }
        if collinear {
            collinear_gap = collinear_gap.max(plan.path_length - opt);
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        passed: filter_mismatch == 0
            && sim_mismatch == 0
            && below_optimum == 0
            && collinear_gap < 1e-12
            && within(elapsed, 60),
        detail: format!(
            "50 grids: {filter_mismatch} filter mismatches; 60 paths (≤ 7 waypoints): {sim_mismatch} greedy mismatches, \
             {below_optimum} below optimum, collinear gap {collinear_gap:.1e}; {:.1}s (≤ 60s)",
            elapsed.as_secs_f64()
        ),
    }
}

// ---- criterion 8 ---------------------------------------------------------

fn threshold_semantics() -> Outcome {
    let rows = [
        ((16.01, 0.63), QualityLabel::Low),
        ((15.33, 0.68), QualityLabel::Low),
        ((15.37, 0.56), QualityLabel::Low),
        ((20.23, 0.84), QualityLabel::High),
        ((18.24, 0.81), QualityLabel::Low),
        ((17.01, 0.73), QualityLabel::Low),
    ];
    let wrong = rows.iter().filter(|((p, s), want)| label_render(*p, *s) != *want).count();
    Outcome {
        passed: wrong == 0,
        detail: format!("{} of 6 reference metric pairs labeled as decided (AND rule)", 6 - wrong),
    }
}

// ---- criteria 1, 2, 7 ----------------------------------------------------

fn default_config() -> MissionConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    MissionConfig::load(&path).expect("default config loads")
}

struct MissionRun {
    seed: u64,
    dir: PathBuf,
    result: Result<MissionReport, String>,
    elapsed: Duration,
    evaluator_secs: f64,
}

fn run_seed(root: &Path, seed: u64, tag: &str) -> MissionRun {
    let mut cfg = default_config();
    cfg.seed = seed;
    let dir = root.join(format!("{tag}-{seed}"));
    let start = Instant::now();
    let result = run_mission(&cfg, Some(&dir)).map_err(|e| e.to_string());
    let elapsed = start.elapsed();
    say(&format!(
        "    {tag} {seed}: mission {} after {:.0}s",
        if result.is_ok() { "finished" } else { "failed" },
        elapsed.as_secs_f64()
    ));
    let evaluator_secs = result
        .as_ref()
        .map(|r| {
            ["evaluator-data", "train-evaluator"]
                .iter()
                .filter_map(|s| r.timings.get(*s))
                .sum()
        })
        .unwrap_or(f64::NAN);
    MissionRun {
        seed,
        dir,
        result,
        elapsed,
        evaluator_secs,
    }
}

fn closed_loop(runs: &[MissionRun]) -> Outcome {
    let mut passes = 0;
    let mut slowest = Duration::ZERO;
    for run in runs {
        slowest = slowest.max(run.elapsed);
        match &run.result {
            Ok(report) => {
                let checks = check_thresholds(report);
                let quantile_ok = checks.iter().take(3).all(|c| c.passed);
                passes += quantile_ok as usize;
                let q = &report.psnr_quantiles;
                say(&format!(
                    "    seed {}: Δq0.25 {:+.2} Δq0.1 {:+.2} Δq0.05 {:+.2} Δmedian {:+.2} dB, {} waypoints, {:.0}s -> {}",
                    run.seed,
                    q[0].delta,
                    q[1].delta,
                    q[2].delta,
                    report.iterations[1].median_psnr_db - report.iterations[0].median_psnr_db,
                    report.plan.waypoints,
                    run.elapsed.as_secs_f64(),
                    if quantile_ok { "ok" } else { "miss" }
                ));
            }
            Err(e) => say(&format!("    seed {}: mission failed: {e}", run.seed)),
        }
    }
    Outcome {
        passed: passes >= 4 && slowest <= Duration::from_secs(45 * 60),
        detail: format!(
            "{passes}/5 seeds with Δq0.1 ≥ +1, Δq0.05 ≥ +1 dB and median drop ≤ 0.25 dB (need ≥ 4); slowest mission {:.0}s (≤ 2700s)",
            slowest.as_secs_f64()
        ),
    }
}

fn evaluator_quality(runs: &[MissionRun]) -> Outcome {
    let mut passes = 0;
    let mut smallest_set = usize::MAX;
    let mut slowest = 0.0f64;
    for run in runs {
        let Ok(report) = &run.result else {
            continue;
        };
        let e = &report.evaluator;
        let size = e.train_items + e.test_items;
        smallest_set = smallest_set.min(size);
        slowest = slowest.max(run.evaluator_secs);
        let ok = e.accuracy >= 0.90 && e.roc_auc >= 0.95 && size >= 400;
        passes += ok as usize;
        say(&format!(
            "    seed {}: {} balanced renders, accuracy {:.3}, ROC AUC {:.3}, {:.0}s -> {}",
            run.seed,
            size,
            e.accuracy,
            e.roc_auc,
            run.evaluator_secs,
            if ok { "ok" } else { "miss" }
        ));
    }
    Outcome {
        passed: passes >= 4 && slowest <= 30.0 * 60.0,
        detail: format!(
            "{passes}/5 seeds with accuracy ≥ 0.90 and AUC ≥ 0.95 on ≥ 400 balanced renders (smallest {smallest_set}); \
             slowest {slowest:.0}s (≤ 1800s)"
        ),
    }
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    matches!((fs::read(a), fs::read(b)), (Ok(x), Ok(y)) if x == y)
}

fn determinism(first: &MissionRun, root: &Path) -> Outcome {
    if first.result.is_err() {
        return Outcome {
            passed: false,
            detail: "reference mission failed".into(),
        };
    }
    // A different worker count must not change any output.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let rerun = pool.install(|| run_seed(root, first.seed, "rerun"));
    let compared = [
        artifacts::METRICS,
        artifacts::QUANTILES,
        artifacts::CDF,
        artifacts::GRID,
        artifacts::PLAN,
        artifacts::FIELD_1,
        artifacts::FIELD_2,
        artifacts::EVALUATOR,
        artifacts::REPORT,
    ];
    let differing: Vec<&str> = compared
        .iter()
        .copied()
        .filter(|f| !same_bytes(&first.dir.join(f), &rerun.dir.join(f)))
        .collect();

    let tmp = root.join("roundtrip");
    fs::create_dir_all(&tmp).unwrap();
    let mut broken = Vec::new();
    let ds = read_pose_dataset(&first.dir.join(artifacts::CAPTURE_1)).unwrap();
    write_pose_dataset(&ds, &tmp.join("ds")).unwrap();
    if read_pose_dataset(&tmp.join("ds")).unwrap() != ds
        || !same_bytes(
            &first.dir.join(artifacts::CAPTURE_1).join(MANIFEST_FILE),
            &tmp.join("ds").join(MANIFEST_FILE),
        )
    {
        broken.push("dataset");
    }
    let field = RadianceField::load(&first.dir.join(artifacts::FIELD_2)).unwrap();
    field.save(&tmp.join("f.ckpt")).unwrap();
    if !same_bytes(&first.dir.join(artifacts::FIELD_2), &tmp.join("f.ckpt")) || RadianceField::load(&tmp.join("f.ckpt")).unwrap() != field {
        broken.push("field checkpoint");
    }
    let model = EvaluatorModel::load(&first.dir.join(artifacts::EVALUATOR)).unwrap();
    model.save(&tmp.join("e.ckpt")).unwrap();
    if !same_bytes(&first.dir.join(artifacts::EVALUATOR), &tmp.join("e.ckpt")) {
        broken.push("evaluator checkpoint");
    }
    let plan = read_plan(&first.dir.join(artifacts::PLAN)).unwrap();
    write_plan(&plan, &tmp.join("plan.json")).unwrap();
    if !same_bytes(&first.dir.join(artifacts::PLAN), &tmp.join("plan.json")) || read_plan(&tmp.join("plan.json")).unwrap() != plan {
        broken.push("plan");
    }
    Outcome {
        passed: rerun.result.is_ok() && differing.is_empty() && broken.is_empty(),
        detail: format!(
            "rerun of seed {} on 3 workers: {} of {} artifacts differ {:?}; round-trip failures {:?}",
            first.seed,
            differing.len(),
            compared.len(),
            differing,
            broken
        ),
    }
}

fn selected() -> Vec<u8> {
    match std::env::var("ACCEPTANCE_CRITERIA") {
        Ok(list) => list.split(',').filter_map(|n| n.trim().parse().ok()).collect(),
        Err(_) => (1..=8).collect(),
    }
}

#[test]
fn acceptance_criteria() {
    let wanted = selected();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut record = |n: u8, name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        if !wanted.contains(&n) {
            say(&format!("[SKIP] criterion {n} {name}"));
            return;
        }
        let o = run();
        say(&format!("[{}] criterion {n} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail));
        results.push((n, name, o));
    };
    record(8, "threshold semantics", &mut threshold_semantics);
    record(4, "metric oracles", &mut metric_oracles);
    record(5, "rendering invariants", &mut rendering_invariants);
    record(6, "planner oracles", &mut planner_oracles);
    record(3, "gradient oracles", &mut gradient_oracles);

    if [1, 2, 7].iter().any(|n| wanted.contains(n)) {
        let root = tempfile::tempdir().unwrap();
        let runs: Vec<MissionRun> = SEEDS.iter().map(|&s| run_seed(root.path(), s, "seed")).collect();
        record(1, "closed-loop quantile improvement", &mut || closed_loop(&runs));
        record(2, "evaluator quality", &mut || evaluator_quality(&runs));
        record(7, "determinism and persistence", &mut || determinism(&runs[0], root.path()));
    }

    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.2.passed)
        .map(|r| format!("{} ({})", r.0, r.1))
        .collect();
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
