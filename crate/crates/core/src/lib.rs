//! Head pose estimation building blocks: binned multi-loss training with exact
//! gradients, and a landmark-to-pose pipeline (pinhole projection,
//! Levenberg-Marquardt PnP, face-model perturbations) with sensitivity studies.

pub mod camera;
pub mod facemodel;
pub mod multiloss;
pub mod harness;
pub mod pnp;
pub mod raster;
pub mod rotmath;

pub use camera::{default_intrinsics, project, CameraIntrinsics, Pose};
pub use facemodel::{builtin_mean_face, named_subsets, FaceModel, KeypointSubset};
pub use pnp::{solve_pnp, LMConfig, PnPProblem, PnPSolution};
pub use rotmath::{angle_error, EulerAngles, RotationMatrix};
