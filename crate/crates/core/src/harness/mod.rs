//! Sensitivity studies on synthetic scenes.
//!
//! Every study is a pure function of its [`StudyConfig`]: trial `i` draws
//! all of its randomness from `master_seed + i`, trials may run in parallel,
//! and per-trial outcomes are reduced in trial order so outputs are
//! bit-for-bit reproducible.

mod geometry;
mod learning;
mod output;

pub use geometry::{run_jitter_study, run_stretch_study, run_subset_study};
pub use learning::{
    landmark_dataset, landmark_features, landmark_raster, run_alpha_ablation, run_lowres_study,
    LandmarkScene,
};
pub use output::{
    emit_csv, emit_svg, format_csv, format_svg, parse_csv, parse_landmarks, read_csv, read_landmarks,
    CSV_HEADER,
};

use crate::camera::{default_intrinsics, CameraError, CameraIntrinsics, Pose};
use crate::facemodel::{named_subsets, FaceModelError, KeypointSubset};
use crate::multiloss::{BinSpec, LossError};
use crate::pnp::{LMConfig, PnpError};
use crate::raster::RasterError;
use crate::rotmath::EulerAngles;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Pnp(#[from] PnpError),
    #[error(transparent)]
    FaceModel(#[from] FaceModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Subset,
    Jitter,
    Stretch,
    Lowres,
    AlphaAblation,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Subset => "subset",
            StudyKind::Jitter => "jitter",
            StudyKind::Stretch => "stretch",
            StudyKind::Lowres => "lowres",
            StudyKind::AlphaAblation => "alpha-ablation",
        }
    }

    /// Sweep used when none is given.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            // subset sizes are implied by the subsets themselves
            StudyKind::Subset => Vec::new(),
            StudyKind::Jitter => (0..=10).map(f64::from).collect(),
            StudyKind::Stretch => vec![0.6, 0.8, 1.0, 1.2, 1.4],
            StudyKind::Lowres => vec![1.0, 5.0, 10.0, 15.0],
            StudyKind::AlphaAblation => vec![0.0, 0.01, 0.1, 1.0, 2.0, 4.0],
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Symmetric pose sampling bounds, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRanges {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            yaw: 75.0,
            pitch: 60.0,
            roll: 50.0,
        }
    }
}

impl PoseRanges {
    pub fn sample(&self, rng: &mut impl Rng) -> EulerAngles {
        let mut draw = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let yaw = draw(self.yaw);
        let pitch = draw(self.pitch);
        let roll = draw(self.roll);
        EulerAngles::new(yaw, pitch, roll)
    }
}

/// Settings for the studies that train a toy network.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyStudyConfig {
    pub train_scenes: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Regression weight for the low-resolution study.
    pub alpha: f64,
    /// Side length of the square landmark rasters.
    pub raster_size: usize,
    /// Augmentation schemes compared in the low-resolution study.
    pub schemes: Vec<crate::raster::AugmentScheme>,
}

impl Default for ToyStudyConfig {
    fn default() -> Self {
        Self {
            train_scenes: 2000,
            epochs: 30,
            hidden: 64,
            batch_size: 32,
            learning_rate: 1e-3,
            alpha: 1.0,
            raster_size: 32,
            schemes: crate::raster::AugmentScheme::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: StudyKind,
    /// Scenes per sweep value. The learning studies use this many held-out
    /// test scenes.
    pub trials: usize,
    pub master_seed: u64,
    pub ranges: PoseRanges,
    pub sweep: Vec<f64>,
    pub subsets: Vec<KeypointSubset>,
    pub image_size: u32,
    /// Expression-like noise on jaw and mouth landmarks (subset study).
    pub nonrigid_sigma: f64,
    /// Whole-face shape noise (subset study).
    pub rigid_sigma: f64,
    pub lm: LMConfig,
    pub toy: ToyStudyConfig,
    /// Run trials on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl StudyConfig {
    pub fn new(study: StudyKind) -> Self {
        let subsets = match study {
            StudyKind::Stretch => named_subsets().into_iter().filter(|s| s.name == "all-68").collect(),
            _ => named_subsets(),
        };
        Self {
            study,
            trials: 500,
            master_seed: 0,
            ranges: PoseRanges::default(),
            sweep: study.default_sweep(),
            subsets,
            image_size: 450,
            nonrigid_sigma: 0.05,
            rigid_sigma: 0.0,
            lm: LMConfig::default(),
            toy: ToyStudyConfig::default(),
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.study != StudyKind::Subset && self.sweep.is_empty() {
            return bad("sweep must not be empty".into());
        }
        if self.sweep.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if matches!(self.study, StudyKind::Subset | StudyKind::Jitter | StudyKind::Stretch)
            && self.subsets.is_empty()
        {
            return bad("at least one keypoint subset is required".into());
        }
        let spec = BinSpec::default();
        for (name, r) in [("yaw", self.ranges.yaw), ("pitch", self.ranges.pitch), ("roll", self.ranges.roll)] {
            if !(r >= 0.0 && spec.contains(r) && spec.contains(-r)) {
                return bad(format!("{name} range ±{r}° must lie within the binned range"));
            }
        }
        if self.ranges.pitch >= 90.0 {
            return bad("pitch range must stay below 90°".into());
        }
        if self.image_size == 0 {
            return bad("image size must be positive".into());
        }
        if !(self.nonrigid_sigma >= 0.0 && self.rigid_sigma >= 0.0) {
            return bad("deformation sigmas must be non-negative".into());
        }
        match self.study {
            StudyKind::Jitter if self.sweep.iter().any(|&m| m < 0.0) => {
                bad("jitter magnitudes must be non-negative".into())
            }
            StudyKind::Stretch if self.sweep.iter().any(|s| !(0.5..=2.0).contains(s)) => {
                bad("stretch factors must lie in [0.5, 2.0]".into())
            }
            StudyKind::Lowres if self.sweep.iter().any(|&f| f < 1.0 || f.fract() != 0.0) => {
                bad("degradation factors must be integers >= 1".into())
            }
            StudyKind::AlphaAblation if self.sweep.iter().any(|&a| a < 0.0) => {
                bad("alpha values must be non-negative".into())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn intrinsics(&self) -> Result<CameraIntrinsics, HarnessError> {
        Ok(default_intrinsics(self.image_size, self.image_size)?)
    }

    pub(crate) fn trial_seed(&self, trial: usize) -> u64 {
        self.master_seed.wrapping_add(trial as u64)
    }
}

/// Camera distance at which the face's bounding sphere spans a 50° cone twice over.
pub fn scene_depth(radius: f64) -> f64 {
    2.0 * radius / 25f64.to_radians().tan()
}

/// Random pose in front of the camera for one trial.
pub(crate) fn sample_pose(ranges: &PoseRanges, depth: f64, rng: &mut ChaCha8Rng) -> Pose {
    Pose::from_euler(&ranges.sample(rng), Vector3::new(0.0, 0.0, depth))
}

pub(crate) fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One aggregated line of a study: MAE per angle at one sweep value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub sweep: f64,
    pub yaw_mae: f64,
    pub pitch_mae: f64,
    pub roll_mae: f64,
    /// Mean of the three per-angle MAEs.
    pub mae: f64,
    /// Trials that contributed.
    pub trials: usize,
    /// Trials excluded because the solver or training failed.
    pub failed: usize,
}

impl StudyRow {
    /// Aggregates per-trial `[yaw, pitch, roll]` errors; `None` marks a failed trial.
    pub fn aggregate(sweep: f64, errors: impl IntoIterator<Item = Option<[f64; 3]>>) -> Self {
        let mut sums = [0.0; 3];
        let (mut ok, mut failed) = (0usize, 0usize);
        for e in errors {
            match e {
                Some(e) => {
                    for (s, v) in sums.iter_mut().zip(e) {
                        *s += v;
                    }
                    ok += 1;
                }
                None => failed += 1,
            }
        }
        let m = if ok == 0 {
            [f64::NAN; 3]
        } else {
            sums.map(|s| s / ok as f64)
        };
        Self::from_maes(sweep, m, ok, failed)
    }

    pub fn from_maes(sweep: f64, m: [f64; 3], trials: usize, failed: usize) -> Self {
        Self {
            sweep,
            yaw_mae: m[0],
            pitch_mae: m[1],
            roll_mae: m[2],
            mae: (m[0] + m[1] + m[2]) / 3.0,
            trials,
            failed,
        }
    }

    /// A cell whose computation failed outright.
    pub fn invalid(sweep: f64, failed: usize) -> Self {
        Self::from_maes(sweep, [f64::NAN; 3], 0, failed)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn row(&self, sweep: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.sweep == sweep)
    }
}

/// One curve of a study (a subset, an axis, an augmentation scheme, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct StudySeries {
    pub name: String,
    pub result: StudyResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub study: StudyKind,
    pub series: Vec<StudySeries>,
    /// Non-fatal notes, e.g. cells invalidated by divergence.
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn series(&self, name: &str) -> Option<&StudyResult> {
        self.series.iter().find(|s| s.name == name).map(|s| &s.result)
    }

    pub fn failed_trials(&self) -> usize {
        self.series.iter().flat_map(|s| &s.result.rows).map(|r| r.failed).sum()
    }
}

/// Dispatches on `config.study`.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport, HarnessError> {
    match config.study {
        StudyKind::Subset => run_subset_study(config),
        StudyKind::Jitter => run_jitter_study(config),
        StudyKind::Stretch => run_stretch_study(config),
        StudyKind::Lowres => run_lowres_study(config),
        StudyKind::AlphaAblation => run_alpha_ablation(config),
    }
}

/// Maps `f` over trial indices, in parallel when configured, preserving order.
pub(crate) fn map_trials<T, F>(config: &StudyConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if config.parallel {
        use rayon::prelude::*;
        (0..config.trials).into_par_iter().map(f).collect()
    } else {
        (0..config.trials).map(f).collect()
    }
}
