use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use headpose::facemodel::{
    builtin_mean_face, load_face_model, save_face_model, subset_by_name, KeypointSubset,
};
use headpose::harness::{
    emit_csv, emit_svg, landmark_dataset, landmark_features, read_landmarks, run_study, PoseRanges,
    StudyConfig, StudyKind, StudyReport, ToyStudyConfig,
};
use headpose::multiloss::{
    save_toynet, train_toy, Activation, AdamConfig, MultiLossConfig, Sample, TrainConfig,
};
use headpose::raster::AugmentScheme;
use headpose::{default_intrinsics, project, solve_pnp, EulerAngles, LMConfig, PnPProblem, Pose};
use nalgebra::{Point3, Vector3};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "headpose", version, about = "Head pose loss, PnP and sensitivity studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pose error per keypoint subset on subjects with jaw/mouth deformation.
    StudySubset {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subsets: SubsetArgs,
        /// Std of the jaw/mouth deformation, in model units.
        #[arg(long, default_value_t = 0.05)]
        nonrigid_sigma: f64,
        /// Std of the whole-face deformation, in model units.
        #[arg(long, default_value_t = 0.0)]
        rigid_sigma: f64,
    },
    /// Pose error against uniform landmark jitter (pixels).
    StudyJitter {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subsets: SubsetArgs,
    },
    /// Pose error when solving with a mean face stretched in width or height.
    StudyStretch {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subsets: SubsetArgs,
    },
    /// Toy network on landmark rasters, per augmentation scheme and test degradation factor.
    StudyLowres {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        toy: ToyArgs,
        /// Regression weight.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Augmentation schemes to compare.
        #[arg(long, value_delimiter = ',', default_value = "none,fixed10,uniform1to10,set5")]
        schemes: Vec<AugmentScheme>,
        /// Side length of the landmark rasters.
        #[arg(long, default_value_t = 32)]
        raster_size: usize,
    },
    /// Toy network on landmark coordinates, one run per regression weight.
    AblateAlpha {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        toy: ToyArgs,
    },
    /// Solve for head pose from a landmark file.
    SolvePnp {
        /// Lines of `id u v` (1-based landmark id, pixel coordinates).
        #[arg(long)]
        landmarks: PathBuf,
        /// Face model file (`id x y z` lines); the built-in mean face by default.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 450)]
        width: u32,
        #[arg(long, default_value_t = 450)]
        height: u32,
    },
    /// Train a toy network on synthetic landmark coordinates and save it.
    TrainToy {
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value = "tanh")]
        activation: Activation,
        #[command(flatten)]
        toy: ToyArgs,
    },
    /// Write the built-in mean face to a file.
    ExportFaceModel {
        #[arg(long)]
        out: PathBuf,
    },
    /// Project the mean face at a given pose and write a landmark file.
    SynthLandmarks {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pitch: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        roll: f64,
        #[arg(long, default_value_t = 450)]
        width: u32,
        #[arg(long, default_value_t = 450)]
        height: u32,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Trials per sweep value (held-out test scenes for the learning studies).
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Master seed; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV and SVG files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated sweep values; the study default if omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sweep: Option<Vec<f64>>,
    /// Pose sampling half-ranges in degrees.
    #[arg(long, default_value_t = 75.0)]
    yaw_range: f64,
    #[arg(long, default_value_t = 60.0)]
    pitch_range: f64,
    #[arg(long, default_value_t = 50.0)]
    roll_range: f64,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 450)]
    image_size: u32,
    /// Run trials on one thread. Output is identical either way.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct SubsetArgs {
    /// Comma-separated keypoint subsets (rigid-6, core-12, no-mouth-48, all-68).
    #[arg(long, value_delimiter = ',')]
    subsets: Option<Vec<String>>,
}

#[derive(Args)]
struct ToyArgs {
    /// Training scenes.
    #[arg(long, default_value_t = 2000)]
    train_scenes: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

fn study_config(kind: StudyKind, common: &CommonArgs) -> StudyConfig {
    let mut cfg = StudyConfig::new(kind);
    cfg.trials = common.trials;
    cfg.master_seed = common.seed;
    if let Some(sweep) = &common.sweep {
        cfg.sweep = sweep.clone();
    }
    cfg.ranges = PoseRanges {
        yaw: common.yaw_range,
        pitch: common.pitch_range,
        roll: common.roll_range,
    };
    cfg.image_size = common.image_size;
    cfg.parallel = !common.serial;
    cfg
}

fn apply_subsets(cfg: &mut StudyConfig, args: &SubsetArgs) -> Result<()> {
    if let Some(names) = &args.subsets {
        cfg.subsets = names
            .iter()
            .map(|n| subset_by_name(n).with_context(|| format!("unknown keypoint subset {n:?}")))
            .collect::<Result<Vec<KeypointSubset>>>()?;
    }
    Ok(())
}

fn apply_toy(cfg: &mut StudyConfig, args: &ToyArgs) {
    cfg.toy.train_scenes = args.train_scenes;
    cfg.toy.epochs = args.epochs;
    cfg.toy.hidden = args.hidden;
    cfg.toy.batch_size = args.batch_size;
    cfg.toy.learning_rate = args.lr;
}

fn write_report(report: &StudyReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = String::new();
    for s in &report.series {
        let stem = format!("{}_{}", report.study.name(), s.name);
        let csv = out.join(format!("{stem}.csv"));
        emit_csv(&s.result, &csv)?;
        emit_svg(&format!("{} study: {}", report.study.name(), s.name), &s.result, &out.join(format!("{stem}.svg")))?;
        let _ = writeln!(summary, "{} ({})", s.name, csv.display());
        for r in &s.result.rows {
            let _ = writeln!(
                summary,
                "  sweep {:>8}  yaw {:>8.4}  pitch {:>8.4}  roll {:>8.4}  mae {:>8.4}  trials {}  excluded {}",
                r.sweep, r.yaw_mae, r.pitch_mae, r.roll_mae, r.mae, r.trials, r.failed
            );
        }
    }
    print!("{summary}");
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("excluded trials: {}", report.failed_trials());
    Ok(())
}

fn run_study_command(cfg: StudyConfig, out: &Path) -> Result<()> {
    let report = run_study(&cfg)?;
    write_report(&report, out)
}

fn solve_from_files(landmarks: &Path, model: Option<&Path>, width: u32, height: u32) -> Result<()> {
    let model = match model {
        Some(p) => load_face_model(p)?,
        None => builtin_mean_face(),
    };
    let observed = read_landmarks(landmarks)?;
    if observed.len() < 4 {
        bail!("{}: need at least 4 landmarks, found {}", landmarks.display(), observed.len());
    }
    let model_points: Vec<Point3<f64>> = observed.iter().map(|(id, _)| model.point(*id)).collect();
    let image_points = observed.iter().map(|(_, p)| *p).collect();
    let k = default_intrinsics(width, height)?;
    let problem = PnPProblem::new(model_points, image_points, k)?;
    let sol = solve_pnp(&problem, None, &LMConfig::default())?;
    let e = sol.pose.euler();
    let t = sol.pose.translation;
    println!("yaw {:.6}\npitch {:.6}\nroll {:.6}", e.yaw, e.pitch, e.roll);
    println!("translation {:.6} {:.6} {:.6}", t.x, t.y, t.z);
    println!("rmse_px {:.6e}", sol.rmse);
    println!("iterations {}", sol.iterations);
    println!("converged {} ({:?})", sol.converged, sol.termination);
    Ok(())
}

fn train_toy_command(
    out: &Path,
    seed: u64,
    alpha: f64,
    activation: Activation,
    toy: &ToyArgs,
) -> Result<()> {
    let cfg = StudyConfig {
        master_seed: seed,
        ..StudyConfig::new(StudyKind::AlphaAblation)
    };
    let dataset: Vec<Sample> = landmark_dataset(&cfg, seed, toy.train_scenes)?
        .into_iter()
        .map(|s| Sample {
            input: landmark_features(&s.image_points),
            target: s.truth,
        })
        .collect();
    let train_cfg = TrainConfig {
        loss: MultiLossConfig { alpha },
        adam: AdamConfig {
            learning_rate: toy.lr,
            ..AdamConfig::default()
        },
        hidden: toy.hidden,
        activation,
        batch_size: toy.batch_size,
        epochs: toy.epochs,
        seed,
        ..TrainConfig::default()
    };
    let report = train_toy(&dataset, &train_cfg)?;
    println!("epoch 0 val_mae {:.4}", report.untrained_val_mae);
    for s in &report.curve {
        println!(
            "epoch {} train_loss {:.4} train_mae {:.4} val_mae {:.4}",
            s.epoch, s.train_loss, s.train_mae, s.val_mae
        );
    }
    save_toynet(&report.net, out).with_context(|| format!("writing {}", out.display()))?;
    println!("saved {}", out.display());
    Ok(())
}

fn synth_landmarks(out: &Path, angles: EulerAngles, width: u32, height: u32) -> Result<()> {
    let model = builtin_mean_face();
    let k = default_intrinsics(width, height)?;
    let depth = headpose::harness::scene_depth(model.bounding_radius());
    let pose = Pose::from_euler(&angles, Vector3::new(0.0, 0.0, depth));
    let points = project(model.points(), &pose, &k)?;
    let mut s = format!(
        "# yaw {} pitch {} roll {}\n",
        angles.yaw, angles.pitch, angles.roll
    );
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(s, "{} {} {}", i + 1, p.x, p.y);
    }
    std::fs::write(out, s).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::StudySubset {
            common,
            subsets,
            nonrigid_sigma,
            rigid_sigma,
        } => {
            let mut cfg = study_config(StudyKind::Subset, &common);
            apply_subsets(&mut cfg, &subsets)?;
            cfg.nonrigid_sigma = nonrigid_sigma;
            cfg.rigid_sigma = rigid_sigma;
            run_study_command(cfg, &common.out)
        }
        Command::StudyJitter { common, subsets } => {
            let mut cfg = study_config(StudyKind::Jitter, &common);
            apply_subsets(&mut cfg, &subsets)?;
            run_study_command(cfg, &common.out)
        }
        Command::StudyStretch { common, subsets } => {
            let mut cfg = study_config(StudyKind::Stretch, &common);
            apply_subsets(&mut cfg, &subsets)?;
            run_study_command(cfg, &common.out)
        }
        Command::StudyLowres {
            common,
            toy,
            alpha,
            schemes,
            raster_size,
        } => {
            let mut cfg = study_config(StudyKind::Lowres, &common);
            apply_toy(&mut cfg, &toy);
            cfg.toy = ToyStudyConfig {
                alpha,
                schemes,
                raster_size,
                ..cfg.toy
            };
            run_study_command(cfg, &common.out)
        }
        Command::AblateAlpha { common, toy } => {
            let mut cfg = study_config(StudyKind::AlphaAblation, &common);
            apply_toy(&mut cfg, &toy);
            run_study_command(cfg, &common.out)
        }
        Command::SolvePnp {
            landmarks,
            model,
            width,
            height,
        } => solve_from_files(&landmarks, model.as_deref(), width, height),
        Command::TrainToy {
            out,
            seed,
            alpha,
            activation,
            toy,
        } => train_toy_command(&out, seed, alpha, activation, &toy),
        Command::ExportFaceModel { out } => {
            save_face_model(&builtin_mean_face(), &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::SynthLandmarks {
            out,
            yaw,
            pitch,
            roll,
            width,
            height,
        } => synth_landmarks(&out, EulerAngles::new(yaw, pitch, roll), width, height),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // some error types already print their source; skip repeats
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
