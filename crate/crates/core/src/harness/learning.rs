//! Studies that train the toy network on landmark-derived inputs.

use super::{scene_depth, trial_rng, HarnessError, StudyConfig, StudyReport, StudyResult, StudyRow, StudySeries};
use crate::camera::{project, Pose};
use crate::facemodel::{builtin_mean_face, deform_subject};
use crate::multiloss::{
    evaluate_mae, train_toy_split, Activation, AdamConfig, LossError, MultiLossConfig, Sample, ToyNet,
    TrainConfig,
};
use crate::raster::{augment_factor, degrade, rasterize, AugmentScheme, Raster};
use crate::rotmath::EulerAngles;
use nalgebra::{Point2, Vector3};
use rand::Rng;
use rayon::prelude::*;

/// Fraction of the raster side covered by the face's projected radius.
const RASTER_FILL: f64 = 0.45;

/// Seed offset separating the test scenes from the training scenes.
const TEST_SEED_OFFSET: u64 = 1 << 32;

/// Projected landmarks of one randomly posed subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkScene {
    pub truth: EulerAngles,
    /// All 68 landmarks in image pixels, ordered by id.
    pub image_points: Vec<Point2<f64>>,
    /// Projected radius of the face in pixels.
    pub face_radius_px: f64,
}

/// `count` scenes, scene `i` seeded with `first_seed + i`. Subjects are
/// deformed with the configured rigid and non-rigid sigmas.
pub fn landmark_dataset(
    config: &StudyConfig,
    first_seed: u64,
    count: usize,
) -> Result<Vec<LandmarkScene>, HarnessError> {
    let mean = builtin_mean_face();
    let k = config.intrinsics()?;
    let radius = mean.bounding_radius();
    let depth = scene_depth(radius);
    let face_radius_px = k.fx() * radius / depth;
    let scene = |i: usize| -> Result<LandmarkScene, HarnessError> {
        let mut rng = trial_rng(first_seed.wrapping_add(i as u64));
        let truth = config.ranges.sample(&mut rng);
        let subject = deform_subject(&mean, config.rigid_sigma, config.nonrigid_sigma, rng.random());
        let pose = Pose::from_euler(&truth, Vector3::new(0.0, 0.0, depth));
        Ok(LandmarkScene {
            truth,
            image_points: project(subject.points(), &pose, &k)?,
            face_radius_px,
        })
    };
    if config.parallel {
        (0..count).into_par_iter().map(scene).collect()
    } else {
        (0..count).map(scene).collect()
    }
}

/// Centroid-subtracted landmark coordinates divided by their RMS distance
/// from the centroid, flattened as `u1 v1 u2 v2 ...`.
pub fn landmark_features(points: &[Point2<f64>]) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |a, p| a + Vector3::new(p.x, p.y, 0.0)) / n;
    let rms = (points
        .iter()
        .map(|p| (p.x - c.x).powi(2) + (p.y - c.y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let s = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    points
        .iter()
        .flat_map(|p| [(p.x - c.x) * s, (p.y - c.y) * s])
        .collect()
}

/// Renders landmarks into a `size × size` raster, centred on their centroid
/// and scaled so a face of projected radius `face_radius_px` fills
/// [`RASTER_FILL`] of the side.
pub fn landmark_raster(points: &[Point2<f64>], face_radius_px: f64, size: usize) -> Result<Raster, HarnessError> {
    let n = points.len().max(1) as f64;
    let (cx, cy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let s = RASTER_FILL * size as f64 / face_radius_px;
    let half = size as f64 / 2.0;
    let mapped: Vec<Point2<f64>> = points
        .iter()
        .map(|p| Point2::new((p.x - cx) * s + half, (p.y - cy) * s + half))
        .collect();
    Ok(rasterize(&mapped, size, size)?)
}

fn train_config(config: &StudyConfig, alpha: f64) -> TrainConfig {
    let toy = &config.toy;
    TrainConfig {
        loss: MultiLossConfig { alpha },
        adam: AdamConfig {
            learning_rate: toy.learning_rate,
            ..AdamConfig::default()
        },
        hidden: toy.hidden,
        activation: Activation::Tanh,
        batch_size: toy.batch_size,
        epochs: toy.epochs,
        seed: config.master_seed,
        ..TrainConfig::default()
    }
}

fn check_toy(config: &StudyConfig) -> Result<(), HarnessError> {
    config.validate()?;
    let toy = &config.toy;
    if toy.train_scenes == 0 || toy.hidden == 0 || toy.batch_size == 0 || toy.raster_size == 0 {
        return Err(HarnessError::InvalidConfig(
            "training scenes, hidden width, batch size and raster size must be positive".into(),
        ));
    }
    if !(toy.learning_rate > 0.0 && toy.learning_rate.is_finite()) {
        return Err(HarnessError::InvalidConfig("learning rate must be positive".into()));
    }
    Ok(())
}

fn raster_samples(scenes: &[LandmarkScene], size: usize, factor: u32) -> Result<Vec<Sample>, HarnessError> {
    scenes
        .iter()
        .map(|s| {
            let r = degrade(&landmark_raster(&s.image_points, s.face_radius_px, size)?, factor)?;
            Ok(Sample {
                input: r.into_values(),
                target: s.truth,
            })
        })
        .collect()
}

/// Evaluates `net` with its per-angle MAE as a row, or an invalid row if
/// evaluation fails.
fn eval_row(net: &ToyNet, sweep: f64, test: &[Sample]) -> StudyRow {
    match evaluate_mae(net, test) {
        Ok(m) => StudyRow::from_maes(sweep, [m[0], m[1], m[2]], test.len(), 0),
        Err(_) => StudyRow::invalid(sweep, test.len()),
    }
}

/// Trains one network per augmentation scheme on landmark rasters and
/// evaluates each on held-out rasters degraded by every sweep factor. One
/// series per scheme.
pub fn run_lowres_study(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    check_toy(config)?;
    let size = config.toy.raster_size;
    let train_scenes = landmark_dataset(config, config.master_seed, config.toy.train_scenes)?;
    let test_scenes = landmark_dataset(
        config,
        config.master_seed.wrapping_add(TEST_SEED_OFFSET),
        config.trials,
    )?;
    let train = raster_samples(&train_scenes, size, 1)?;
    let tests = config
        .sweep
        .iter()
        .map(|&f| raster_samples(&test_scenes, size, f as u32))
        .collect::<Result<Vec<_>, _>>()?;

    let cfg = train_config(config, config.toy.alpha);
    let run_scheme = |scheme: AugmentScheme| -> (StudySeries, Option<String>) {
        let augment = move |input: &[f64], seed: u64| -> Vec<f64> {
            let factor = augment_factor(scheme, seed);
            Raster::from_values(size, size, input.to_vec())
                .and_then(|r| degrade(&r, factor))
                .map(Raster::into_values)
                .unwrap_or_else(|_| input.to_vec())
        };
        let (rows, note) = match train_toy_split(&train, &[], &cfg, Some(&augment)) {
            Ok(report) => (
                config
                    .sweep
                    .iter()
                    .zip(&tests)
                    .map(|(&f, test)| eval_row(&report.net, f, test))
                    .collect(),
                None,
            ),
            Err(e) => (
                config.sweep.iter().map(|&f| StudyRow::invalid(f, config.trials)).collect(),
                Some(divergence_note(scheme.name(), &e)),
            ),
        };
        (
            StudySeries {
                name: scheme.name().to_string(),
                result: StudyResult { rows },
            },
            note,
        )
    };
    let outcomes: Vec<_> = if config.parallel {
        config.toy.schemes.par_iter().map(|&s| run_scheme(s)).collect()
    } else {
        config.toy.schemes.iter().map(|&s| run_scheme(s)).collect()
    };
    let (series, notes): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(StudyReport {
        study: config.study,
        series,
        notes: notes.into_iter().flatten().collect(),
    })
}

fn divergence_note(what: &str, e: &LossError) -> String {
    format!("{what}: training failed ({e}); row marked invalid")
}

/// Trains one network per regression weight α (the sweep) on normalized
/// landmark coordinates and reports held-out MAE. Single series `alpha`.
pub fn run_alpha_ablation(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    check_toy(config)?;
    let features = |scenes: Vec<LandmarkScene>| -> Vec<Sample> {
        scenes
            .into_iter()
            .map(|s| Sample {
                input: landmark_features(&s.image_points),
                target: s.truth,
            })
            .collect()
    };
    let train = features(landmark_dataset(config, config.master_seed, config.toy.train_scenes)?);
    let test = features(landmark_dataset(
        config,
        config.master_seed.wrapping_add(TEST_SEED_OFFSET),
        config.trials,
    )?);

    let run_alpha = |alpha: f64| -> (StudyRow, Option<String>) {
        match train_toy_split(&train, &[], &train_config(config, alpha), None) {
            Ok(report) => (eval_row(&report.net, alpha, &test), None),
            Err(e) => (
                StudyRow::invalid(alpha, test.len()),
                Some(divergence_note(&format!("alpha {alpha}"), &e)),
            ),
        }
    };
    let outcomes: Vec<_> = if config.parallel {
        config.sweep.par_iter().map(|&a| run_alpha(a)).collect()
    } else {
        config.sweep.iter().map(|&a| run_alpha(a)).collect()
    };
    let (rows, notes): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(StudyReport {
        study: config.study,
        series: vec![StudySeries {
            name: "alpha".into(),
            result: StudyResult { rows },
        }],
        notes: notes.into_iter().flatten().collect(),
    })
}
