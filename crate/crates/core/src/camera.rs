//! Pinhole camera model with zero lens distortion.
//!
//! Camera frame: +x right, +y down, +z forward. Image origin is the top-left
//! corner with +v pointing down.

use crate::rotmath::{EulerAngles, RotationMatrix};
use nalgebra::{Point2, Point3, Vector3};
use thiserror::Error;

/// Minimum camera-frame depth for a point to be projectable.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point {index} is behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },
    #[error("focal lengths must be positive and finite (fx = {fx}, fy = {fy})")]
    InvalidFocalLength { fx: f64, fy: f64 },
    #[error("image size must be at least 1x1 (got {width}x{height})")]
    InvalidImageSize { width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(CameraError::InvalidFocalLength { fx, fy });
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }

    /// Multiplies every parameter by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self, CameraError> {
        Self::new(self.fx * s, self.fy * s, self.cx * s, self.cy * s)
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Point2<f64> {
        Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// The usual approximation when calibration is unknown: focal length equal to
/// the image width, principal point at the image center.
pub fn default_intrinsics(width: u32, height: u32) -> Result<CameraIntrinsics, CameraError> {
    if width == 0 || height == 0 {
        return Err(CameraError::InvalidImageSize { width, height });
    }
    let f = f64::from(width);
    CameraIntrinsics::new(f, f, f64::from(width) / 2.0, f64::from(height) / 2.0)
}

/// Rigid transform from model coordinates to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_euler(angles: &EulerAngles, translation: Vector3<f64>) -> Self {
        Self::new(angles.to_rotation(), translation)
    }

    pub fn euler(&self) -> EulerAngles {
        self.rotation.to_euler()
    }

    pub fn transform(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation.rotate(&p.coords) + self.translation
    }
}

/// Projects model points through `pose` and `k`, preserving input order.
pub fn project(
    points: &[Point3<f64>],
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<Vec<Point2<f64>>, CameraError> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let c = pose.transform(p);
            if c.z <= MIN_DEPTH {
                Err(CameraError::BehindCamera { index, z: c.z })
            } else {
                Ok(k.project_camera_point(&c))
            }
        })
        .collect()
}
