//! A procedural 68-point mean face, keypoint subsets, perturbations, and
//! synthetic scene generation.
//!
//! Landmark ids follow the common 68-point annotation layout: jaw 1-17,
//! brows 18-27, nose 28-36, eyes 37-48, mouth 49-68. Model axes match the
//! camera frame at a frontal pose: +x towards the image right, +y down,
//! +z away from the camera (the nose points towards -z).

use crate::camera::{project, CameraError, CameraIntrinsics, Pose};
use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const NUM_LANDMARKS: usize = 68;

/// Landmark ids that move with facial expression and jaw motion.
pub const NONRIGID_IDS: [std::ops::RangeInclusive<usize>; 2] = [1..=17, 49..=68];

/// Left/right landmark pairs, mirrored across the x = 0 plane.
const MIRROR_PAIRS: [(usize, usize); 29] = [
    (1, 17),
    (2, 16),
    (3, 15),
    (4, 14),
    (5, 13),
    (6, 12),
    (7, 11),
    (8, 10),
    (18, 27),
    (19, 26),
    (20, 25),
    (21, 24),
    (22, 23),
    (32, 36),
    (33, 35),
    (37, 46),
    (38, 45),
    (39, 44),
    (40, 43),
    (41, 48),
    (42, 47),
    (49, 55),
    (50, 54),
    (51, 53),
    (56, 60),
    (57, 59),
    (61, 65),
    (62, 64),
    (66, 68),
];


#[derive(Debug, Error)]
pub enum FaceModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {NUM_LANDMARKS} landmarks, found {0}")]
    WrongCount(usize),
    #[error("line {line}: duplicate landmark id {id}")]
    DuplicateId { id: usize, line: usize },
    #[error("scale {0} is outside [0.5, 2.0]")]
    OutOfRange(f64),
    #[error("model is rank-degenerate")]
    Degenerate,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// 68 named 3D landmarks with their centroid at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    points: Vec<Point3<f64>>,
}

impl FaceModel {
    /// Builds a model from 68 points ordered by id, recentering it.
    pub fn from_points(points: Vec<Point3<f64>>) -> Result<Self, FaceModelError> {
        if points.len() != NUM_LANDMARKS {
            return Err(FaceModelError::WrongCount(points.len()));
        }
        let model = Self {
            points: recenter(points),
        };
        if model.is_degenerate() {
            return Err(FaceModelError::Degenerate);
        }
        Ok(model)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Landmark by 1-based id.
    pub fn point(&self, id: usize) -> Point3<f64> {
        self.points[id - 1]
    }

    pub fn select(&self, subset: &KeypointSubset) -> Vec<Point3<f64>> {
        subset.indices.iter().map(|&id| self.point(id)).collect()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        centroid(&self.points)
    }

    /// Largest distance of a landmark from the origin.
    pub fn bounding_radius(&self) -> f64 {
        self.points.iter().map(|p| p.coords.norm()).fold(0.0, f64::max)
    }

    fn is_degenerate(&self) -> bool {
        let c = self.centroid();
        let scatter = self
            .points
            .iter()
            .fold(nalgebra::Matrix3::zeros(), |acc, p| {
                let d = p.coords - c;
                acc + d * d.transpose()
            });
        let mut eig = scatter.symmetric_eigenvalues().as_slice().to_vec();
        eig.sort_by(|a, b| b.total_cmp(a));
        !(eig[0] > 0.0 && eig[1] > 1e-12 * eig[0])
    }
}

fn centroid(points: &[Point3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64
}

fn recenter(points: Vec<Point3<f64>>) -> Vec<Point3<f64>> {
    let c = centroid(&points);
    points.into_iter().map(|p| p - c).collect()
}

/// Depth of the frontal face surface at `(x, y)`; negative is towards the camera.
fn surface_depth(x: f64, y: f64) -> f64 {
    let q = 1.0 - (x / 0.8).powi(2) - (y / 1.1).powi(2);
    -0.55 * q.max(0.05).sqrt()
}

/// The built-in mean face: landmarks placed on an ellipsoidal head with a
/// protruding nose. Units are roughly head half-widths.
pub fn builtin_mean_face() -> FaceModel {
    let mut pts = [Point3::<f64>::origin(); NUM_LANDMARKS];
    let mut set = |id: usize, x: f64, y: f64, z: f64| pts[id - 1] = Point3::new(x, y, z);

    // jaw, image-left ear (1) around to the chin (9)
    for k in 0..=8 {
        let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_2 * k as f64 / 8.0;
        let (s, c) = phi.sin_cos();
        set(k + 1, 0.72 * s, -0.1 + 0.95 * c, 0.2 - 0.65 * c);
    }

    // image-left brow, outer (18) to inner (22)
    for k in 0..5 {
        let t = k as f64 / 4.0;
        let x = -0.62 + 0.5 * t;
        let y = -0.42 - 0.08 * (std::f64::consts::PI * t).sin();
        set(18 + k, x, y, surface_depth(x, y) - 0.04);
    }

    // nose bridge 28-31, top to tip
    for k in 0..4 {
        let t = k as f64 / 3.0;
        let y = -0.22 + 0.3 * t;
        set(28 + k, 0.0, y, surface_depth(0.0, y) - 0.05 - 0.23 * t);
    }
    // lower nose 32-34 (34 is the centre of the base)
    for (id, x, lift) in [(32, -0.12, 0.04), (33, -0.06, 0.08), (34, 0.0, 0.12)] {
        let y = 0.15;
        set(id, x, y, surface_depth(x, y) - lift);
    }

    // image-left eye: 37 outer corner, 38-39 upper lid, 40 inner corner, 41-42 lower lid
    for (id, x, y) in [
        (37, -0.43, -0.25),
        (38, -0.36, -0.29),
        (39, -0.28, -0.29),
        (40, -0.21, -0.25),
        (41, -0.28, -0.21),
        (42, -0.36, -0.21),
    ] {
        set(id, x, y, surface_depth(x, y) + 0.03);
    }

    // mouth, image-left half and midline
    for (id, x, y) in [
        (49, -0.25, 0.42),
        (50, -0.16, 0.37),
        (51, -0.06, 0.35),
        (52, 0.0, 0.36),
        (58, 0.0, 0.53),
        (59, -0.06, 0.52),
        (60, -0.16, 0.49),
        (61, -0.20, 0.42),
        (62, -0.08, 0.40),
        (63, 0.0, 0.40),
        (67, 0.0, 0.445),
        (68, -0.08, 0.44),
    ] {
        set(id, x, y, surface_depth(x, y) - 0.03);
    }

    for &(left, right) in MIRROR_PAIRS.iter() {
        // only the image-left member of each pair has been placed (x < 0)
        let (placed, mirrored) = if pts[left - 1].x < 0.0 { (left, right) } else { (right, left) };
        let p = pts[placed - 1];
        pts[mirrored - 1] = Point3::new(-p.x, p.y, p.z);
    }

    FaceModel::from_points(pts.to_vec()).expect("built-in face is well formed")
}

/// A named selection of landmark ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointSubset {
    pub name: String,
    /// Sorted, unique 1-based ids.
    pub indices: Vec<usize>,
}

impl KeypointSubset {
    pub fn new(name: impl Into<String>, mut indices: Vec<usize>) -> Option<Self> {
        indices.sort_unstable();
        indices.dedup();
        let valid = indices.len() >= 4 && indices.iter().all(|&i| (1..=NUM_LANDMARKS).contains(&i));
        valid.then(|| Self {
            name: name.into(),
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Picks this subset's entries out of a full 68-point list.
    pub fn pick<T: Copy>(&self, all: &[T]) -> Vec<T> {
        self.indices.iter().map(|&id| all[id - 1]).collect()
    }
}

/// The keypoint subsets used by the landmark-to-pose studies, smallest first.
pub fn named_subsets() -> Vec<KeypointSubset> {
    let no_mouth: Vec<usize> = (1..=48).collect();
    [
        ("rigid-6", vec![9, 34, 37, 40, 43, 46]),
        ("core-12", vec![9, 20, 25, 28, 31, 32, 34, 36, 37, 40, 43, 46]),
        ("no-mouth-48", no_mouth),
        ("all-68", (1..=NUM_LANDMARKS).collect()),
    ]
    .into_iter()
    .map(|(name, ids)| KeypointSubset::new(name, ids).expect("subset table is valid"))
    .collect()
}

pub fn subset_by_name(name: &str) -> Option<KeypointSubset> {
    named_subsets().into_iter().find(|s| s.name == name)
}

/// Scales x by `sx` and y by `sy`, then recenters.
pub fn stretch_model(model: &FaceModel, sx: f64, sy: f64) -> Result<FaceModel, FaceModelError> {
    for s in [sx, sy] {
        if !(0.5..=2.0).contains(&s) {
            return Err(FaceModelError::OutOfRange(s));
        }
    }
    let pts = model
        .points
        .iter()
        .map(|p| Point3::new(p.x * sx, p.y * sy, p.z))
        .collect();
    Ok(FaceModel {
        points: recenter(pts),
    })
}

/// Displaces each coordinate by an independent uniform draw in `[-magnitude, magnitude]`.
pub fn jitter_landmarks(points: &[Point2<f64>], magnitude: f64, seed: u64) -> Vec<Point2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points
        .iter()
        .map(|p| {
            let dx: f64 = rng.random_range(-1.0..=1.0);
            let dy: f64 = rng.random_range(-1.0..=1.0);
            Point2::new(p.x + dx * magnitude, p.y + dy * magnitude)
        })
        .collect()
}

/// Fraction of the non-rigid variance shared by all landmarks of a region
/// (jaw, mouth); the rest is drawn per landmark.
pub const EXPRESSION_CORRELATION: f64 = 0.5;

/// Adds Gaussian 3D noise with std `rigid_sigma` to every landmark and extra
/// noise with std `nonrigid_sigma` to jaw and mouth landmarks. The extra
/// noise mixes one displacement shared across the landmark's region with an
/// independent one, weighted by [`EXPRESSION_CORRELATION`], so each landmark
/// still has marginal std `nonrigid_sigma`.
pub fn deform_subject(model: &FaceModel, rigid_sigma: f64, nonrigid_sigma: f64, seed: u64) -> FaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = || -> Vector3<f64> {
        Vector3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng))
    };
    let shared: [Vector3<f64>; 2] = [draw(), draw()];
    let (ws, wi) = (EXPRESSION_CORRELATION.sqrt(), (1.0 - EXPRESSION_CORRELATION).sqrt());
    let points = model
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let id = i + 1;
            // always draw both so the stream does not depend on the sigmas
            let rigid = draw() * rigid_sigma;
            let own = draw();
            let mut q = *p;
            if rigid_sigma > 0.0 {
                q += rigid;
            }
            let region = NONRIGID_IDS.iter().position(|r| r.contains(&id));
            if let (true, Some(r)) = (nonrigid_sigma > 0.0, region) {
                q += (shared[r] * ws + own * wi) * nonrigid_sigma;
            }
            q
        })
        .collect();
    FaceModel { points }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub true_pose: Pose,
    pub model_used_for_truth: FaceModel,
    /// Uncorrupted projections of all 68 landmarks, ordered by id.
    pub image_points: Vec<Point2<f64>>,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

pub fn make_scene(
    truth_model: &FaceModel,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    seed: u64,
) -> Result<SyntheticScene, CameraError> {
    let image_points = project(truth_model.points(), pose, intrinsics)?;
    Ok(SyntheticScene {
        true_pose: *pose,
        model_used_for_truth: truth_model.clone(),
        image_points,
        intrinsics: *intrinsics,
        seed,
    })
}

/// Text format: one `id x y z` line per landmark, `#` starts a comment.
pub fn format_face_model(model: &FaceModel) -> String {
    let mut s = String::from("# id x y z\n");
    for (i, p) in model.points.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {}", i + 1, p.x, p.y, p.z);
    }
    s
}

pub fn parse_face_model(text: &str) -> Result<FaceModel, FaceModelError> {
    let mut slots: Vec<Option<Point3<f64>>> = vec![None; NUM_LANDMARKS];
    let mut seen = HashSet::new();
    let mut count = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(FaceModelError::Parse {
                line,
                message: format!("expected 4 fields (id x y z), found {}", fields.len()),
            });
        }
        let id: usize = fields[0].parse().map_err(|_| FaceModelError::Parse {
            line,
            message: format!("invalid id {:?}", fields[0]),
        })?;
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                FaceModelError::Parse {
                    line,
                    message: format!("invalid coordinate {f:?}"),
                }
            })?;
        }
        if !seen.insert(id) {
            return Err(FaceModelError::DuplicateId { id, line });
        }
        count += 1;
        if (1..=NUM_LANDMARKS).contains(&id) {
            slots[id - 1] = Some(Point3::new(xyz[0], xyz[1], xyz[2]));
        }
    }
    if count != NUM_LANDMARKS || slots.iter().any(Option::is_none) {
        return Err(FaceModelError::WrongCount(count));
    }
    FaceModel::from_points(slots.into_iter().flatten().collect())
}

pub fn save_face_model(model: &FaceModel, path: &Path) -> Result<(), FaceModelError> {
    std::fs::write(path, format_face_model(model)).map_err(|source| FaceModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_face_model(path: &Path) -> Result<FaceModel, FaceModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| FaceModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_face_model(&text)
}
