//! Landmark-to-pose studies: keypoint subsets, landmark jitter, and
//! mean-face stretching.

use super::{
    map_trials, sample_pose, scene_depth, trial_rng, HarnessError, StudyConfig, StudyReport, StudyResult,
    StudyRow, StudySeries,
};
use crate::camera::CameraIntrinsics;
use crate::facemodel::{
    builtin_mean_face, deform_subject, jitter_landmarks, make_scene, stretch_model, FaceModel,
    KeypointSubset,
};
use crate::pnp::{solve_pnp, LMConfig, PnPProblem};
use crate::rotmath::EulerAngles;
use nalgebra::Point2;
use rand::Rng;

/// Per-angle errors of one solve, `None` if the solver failed.
type Cell = Option<[f64; 3]>;

/// Solves PnP for one subset and returns per-angle errors, or `None` if the
/// solver rejected the problem.
fn subset_errors(
    model: &FaceModel,
    image_points: &[Point2<f64>],
    subset: &KeypointSubset,
    k: &CameraIntrinsics,
    truth: &EulerAngles,
    lm: &LMConfig,
) -> Cell {
    let problem = PnPProblem::new(model.select(subset), subset.pick(image_points), *k).ok()?;
    let sol = solve_pnp(&problem, None, lm).ok()?;
    Some(sol.pose.euler().errors_to(truth))
}

fn column<T: Copy>(rows: &[Vec<T>], j: usize) -> impl Iterator<Item = T> + '_ {
    rows.iter().map(move |r| r[j])
}

/// Ground-truth landmarks come from a subject whose jaw and mouth are
/// deformed; pose is recovered against the undeformed mean face using each
/// keypoint subset. One row per subset, keyed by subset size.
pub fn run_subset_study(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    config.validate()?;
    let mean = builtin_mean_face();
    let k = config.intrinsics()?;
    let depth = scene_depth(mean.bounding_radius());

    // per trial: one entry per subset
    let outcomes: Vec<Vec<Cell>> = map_trials(config, |i| {
        let seed = config.trial_seed(i);
        let mut rng = trial_rng(seed);
        let pose = sample_pose(&config.ranges, depth, &mut rng);
        let subject = deform_subject(&mean, config.rigid_sigma, config.nonrigid_sigma, rng.random());
        let Ok(scene) = make_scene(&subject, &pose, &k, seed) else {
            return vec![None; config.subsets.len()];
        };
        let truth = pose.euler();
        config
            .subsets
            .iter()
            .map(|s| subset_errors(&mean, &scene.image_points, s, &k, &truth, &config.lm))
            .collect()
    });

    let rows = config
        .subsets
        .iter()
        .enumerate()
        .map(|(j, s)| StudyRow::aggregate(s.len() as f64, column(&outcomes, j)))
        .collect();
    Ok(StudyReport {
        study: config.study,
        series: vec![StudySeries {
            name: "subsets".into(),
            result: StudyResult { rows },
        }],
        notes: config
            .subsets
            .iter()
            .map(|s| format!("sweep {} = subset {}", s.len(), s.name))
            .collect(),
    })
}

/// Ground-truth landmarks are jittered by uniform noise of each sweep
/// magnitude (pixels); the same noise pattern is scaled across magnitudes.
/// One series per subset.
pub fn run_jitter_study(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    config.validate()?;
    let mean = builtin_mean_face();
    let k = config.intrinsics()?;
    let depth = scene_depth(mean.bounding_radius());

    // per trial: [magnitude][subset]
    let outcomes: Vec<Vec<Vec<Cell>>> = map_trials(config, |i| {
        let seed = config.trial_seed(i);
        let mut rng = trial_rng(seed);
        let pose = sample_pose(&config.ranges, depth, &mut rng);
        let jitter_seed: u64 = rng.random();
        let Ok(scene) = make_scene(&mean, &pose, &k, seed) else {
            return vec![vec![None; config.subsets.len()]; config.sweep.len()];
        };
        let truth = pose.euler();
        config
            .sweep
            .iter()
            .map(|&m| {
                let noisy = jitter_landmarks(&scene.image_points, m, jitter_seed);
                config
                    .subsets
                    .iter()
                    .map(|s| subset_errors(&mean, &noisy, s, &k, &truth, &config.lm))
                    .collect()
            })
            .collect()
    });

    let series = config
        .subsets
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let rows = config
                .sweep
                .iter()
                .enumerate()
                .map(|(m, &mag)| StudyRow::aggregate(mag, outcomes.iter().map(|t| t[m][j])))
                .collect();
            StudySeries {
                name: s.name.clone(),
                result: StudyResult { rows },
            }
        })
        .collect();
    Ok(StudyReport {
        study: config.study,
        series,
        notes: Vec::new(),
    })
}

/// Ground-truth landmarks come from the unmodified mean face; pose is
/// recovered with a copy stretched in width (`x`) or height (`y`) by each
/// sweep factor. Series `width` and `height` (suffixed with the subset name
/// when more than one subset is configured).
pub fn run_stretch_study(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    config.validate()?;
    let mean = builtin_mean_face();
    let k = config.intrinsics()?;
    let depth = scene_depth(mean.bounding_radius());

    let mut stretched = Vec::with_capacity(2);
    for axis in 0..2 {
        let models = config
            .sweep
            .iter()
            .map(|&s| {
                let (sx, sy) = if axis == 0 { (s, 1.0) } else { (1.0, s) };
                stretch_model(&mean, sx, sy)
            })
            .collect::<Result<Vec<_>, _>>()?;
        stretched.push(models);
    }

    // per trial: [axis][factor][subset]
    let outcomes: Vec<Vec<Vec<Vec<Cell>>>> = map_trials(config, |i| {
        let seed = config.trial_seed(i);
        let mut rng = trial_rng(seed);
        let pose = sample_pose(&config.ranges, depth, &mut rng);
        let truth = pose.euler();
        let scene = make_scene(&mean, &pose, &k, seed).ok();
        stretched
            .iter()
            .map(|models| {
                models
                    .iter()
                    .map(|model| {
                        config
                            .subsets
                            .iter()
                            .map(|s| {
                                let scene = scene.as_ref()?;
                                subset_errors(model, &scene.image_points, s, &k, &truth, &config.lm)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });

    let mut series = Vec::new();
    for (axis, axis_name) in ["width", "height"].into_iter().enumerate() {
        for (j, s) in config.subsets.iter().enumerate() {
            let rows = config
                .sweep
                .iter()
                .enumerate()
                .map(|(f, &factor)| {
                    StudyRow::aggregate(factor, outcomes.iter().map(|t| t[axis][f][j]))
                })
                .collect();
            let name = if config.subsets.len() == 1 {
                axis_name.to_string()
            } else {
                format!("{axis_name}-{}", s.name)
            };
            series.push(StudySeries {
                name,
                result: StudyResult { rows },
            });
        }
    }
    Ok(StudyReport {
        study: config.study,
        series,
        notes: Vec::new(),
    })
}
