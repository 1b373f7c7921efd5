use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recapture::camera::look_at;
use recapture::mission::{
    check_thresholds, ingest_external_dataset, install_first_pass, run_mission, run_stage, MissionConfig,
    MissionReport, Stage, StageOutput,
};
use recapture::scene::{render_ground_truth, SceneSpec};
use recapture::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

/// Two-pass simulated aerial capture and reconstruction.
#[derive(Parser)]
#[command(name = "recapture", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Mission config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-loop pipeline or one of its stages.
    #[command(subcommand)]
    Mission(MissionCmd),
    /// Work with posed-image datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Oracle scene utilities.
    #[command(subcommand)]
    Scene(SceneCmd),
}

#[derive(Subcommand)]
enum MissionCmd {
    /// Every stage in order.
    Run,
    /// Exactly one stage, from the artifacts already on disk.
    Stage {
        /// capture-1, train-field-1, evaluator-data, train-evaluator, plan,
        /// capture-2, train-field-2, evaluate or report.
        name: String,
    },
    /// Rebuild the report from the evaluation artifacts.
    Report {
        /// Exit with status 4 unless every acceptance threshold holds.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Validate an external posed-image directory; with --out, install it as
    /// the first-pass capture so training and planning can run on it.
    Ingest { directory: PathBuf },
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Render one ground-truth view of the configured scene to PNG.
    Render {
        /// Camera position x y z.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        position: Vec<f64>,
        /// Look-at point; defaults to the trajectory target.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        target: Option<Vec<f64>>,
        #[arg(long)]
        output: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Stage(Error),
    Threshold,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool is configured once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_STAGE)
        }
        Err(Failure::Threshold) => ExitCode::from(EXIT_THRESHOLD),
    }
}

fn load_config(g: &Global) -> Result<MissionConfig, Failure> {
    let path = g.config.as_deref().unwrap_or(Path::new("configs/default.json"));
    let mut cfg = MissionConfig::load(path).map_err(Failure::Config)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Errors that mean the request itself was invalid map to the config exit
/// status; anything raised while a stage runs is a stage failure.
fn classify(e: Error) -> Failure {
    match e {
        Error::Validation { .. } | Error::Json { .. } => Failure::Config(e),
        e => Failure::Stage(e),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match &cli.command {
        Command::Mission(MissionCmd::Run) => {
            let cfg = load_config(g)?;
            let report = run_mission(&cfg, out).map_err(Failure::Stage)?;
            print_report(&report);
        }
        Command::Mission(MissionCmd::Stage { name }) => {
            let stage: Stage = name.parse().map_err(Failure::Config)?;
            let cfg = load_config(g)?;
            match run_stage(&cfg, stage, out).map_err(Failure::Stage)? {
                StageOutput::Report(r) => print_report(&r),
                StageOutput::Done => println!("{stage}: done"),
            }
        }
        Command::Mission(MissionCmd::Report { check }) => {
            let cfg = load_config(g)?;
            let StageOutput::Report(report) = run_stage(&cfg, Stage::Report, out).map_err(Failure::Stage)? else {
                unreachable!("report stage yields a report")
            };
            print_report(&report);
            if *check {
                let mut ok = true;
                for c in check_thresholds(&report) {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    println!("{verdict} {}: {:.4} (threshold {})", c.name, c.value, c.threshold);
                    ok &= c.passed;
                }
                if !ok {
                    return Err(Failure::Threshold);
                }
            }
        }
        Command::Dataset(DatasetCmd::Ingest { directory }) => {
            let ds = ingest_external_dataset(directory).map_err(Failure::Config)?;
            let i = ds.intrinsics();
            println!("{} frames, {}x{} px", ds.len(), i.width(), i.height());
            if let Some(out) = out {
                std::fs::create_dir_all(out).map_err(|e| {
                    Failure::Stage(Error::Io {
                        path: out.to_path_buf(),
                        source: e,
                    })
                })?;
                install_first_pass(&ds, out).map_err(Failure::Stage)?;
                println!("installed as first-pass capture in {}", out.display());
            }
        }
        Command::Scene(SceneCmd::Render {
            position,
            target,
            output,
        }) => {
            let cfg = load_config(g)?;
            let scene = SceneSpec::load(&cfg.scene).map_err(Failure::Config)?;
            let target = target
                .as_ref()
                .map_or(cfg.trajectory.target, |t| [t[0], t[1], t[2]]);
            let pose = look_at([position[0], position[1], position[2]], target, [0.0, 0.0, 1.0]).map_err(classify)?;
            let intr = cfg.intrinsics().map_err(Failure::Config)?;
            let img = render_ground_truth(&scene, &pose, &intr, cfg.oracle_samples);
            img.save_png(output).map_err(classify)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn print_report(r: &MissionReport) {
    println!("evaluated poses: {}", r.evaluated_poses);
    println!("q      iter1_psnr  iter2_psnr  delta");
    for q in &r.psnr_quantiles {
        println!(
            "{:<6} {:>10.3}  {:>10.3}  {:>+6.3}",
            q.q, q.iteration_1, q.iteration_2, q.delta
        );
    }
    let [a, b] = &r.iterations;
    println!(
        "median psnr: {:.3} -> {:.3} dB; frames: {} -> {}",
        a.median_psnr_db, b.median_psnr_db, a.training_frames, b.training_frames
    );
    println!(
        "evaluator: accuracy {:.3}, roc auc {:.3} ({} test items)",
        r.evaluator.accuracy, r.evaluator.roc_auc, r.evaluator.test_items
    );
    println!(
        "plan: {} waypoints of {} candidates, path {:.2} m",
        r.plan.waypoints, r.plan.candidates, r.plan.path_length
    );
}
