//! Perspective-n-point pose recovery by Levenberg-Marquardt minimization of
//! the reprojection error.
//!
//! The solver state is a rotation plus a translation. Each step solves for a
//! 6-vector `(ω, δt)`: `ω` is a rotation vector applied on the left
//! (`R ← exp([ω]×) R`) and `δt` is added to the translation. The Jacobian
//! returned by [`jacobian`] uses the same parameterization.

use crate::camera::{CameraError, CameraIntrinsics, Pose, MIN_DEPTH};
use crate::rotmath::{axis_angle_to_rotation, skew, AxisAngle, RotationMatrix};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Point2, Point3, Vector3, Vector6};
use thiserror::Error;

/// Half field of view used to place the default initial guess.
const DEFAULT_INIT_HALF_FOV_DEG: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("model has {model} points but image has {image}")]
    LengthMismatch { model: usize, image: usize },
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone)]
pub struct PnPProblem {
    model_points: Vec<Point3<f64>>,
    image_points: Vec<Point2<f64>>,
    intrinsics: CameraIntrinsics,
}

impl PnPProblem {
    pub fn new(
        model_points: Vec<Point3<f64>>,
        image_points: Vec<Point2<f64>>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, PnpError> {
        if model_points.len() != image_points.len() {
            return Err(PnpError::LengthMismatch {
                model: model_points.len(),
                image: image_points.len(),
            });
        }
        if model_points.len() < 4 {
            return Err(PnpError::TooFewPoints(model_points.len()));
        }
        let finite = model_points.iter().all(|p| p.coords.iter().all(|v| v.is_finite()))
            && image_points.iter().all(|p| p.coords.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(PnpError::DegenerateProblem("non-finite coordinates".into()));
        }

        // rank of the centered model must be at least 2
        let n = model_points.len() as f64;
        let centroid = model_points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / n;
        let scatter = model_points.iter().fold(Matrix3::zeros(), |acc, p| {
            let d = p.coords - centroid;
            acc + d * d.transpose()
        });
        let mut eig = scatter.symmetric_eigenvalues().as_slice().to_vec();
        eig.sort_by(|a, b| b.total_cmp(a));
        if !(eig[0] > 0.0 && eig[1] > 1e-12 * eig[0]) {
            return Err(PnpError::DegenerateProblem(
                "model points are collinear or coincident".into(),
            ));
        }

        Ok(Self {
            model_points,
            image_points,
            intrinsics,
        })
    }

    pub fn model_points(&self) -> &[Point3<f64>] {
        &self.model_points
    }

    pub fn image_points(&self) -> &[Point2<f64>] {
        &self.image_points
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn len(&self) -> usize {
        self.model_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_points.is_empty()
    }

    /// Identity rotation, model pushed along +z so that its bounding sphere
    /// fits a 50° field of view twice over.
    pub fn default_init(&self) -> Pose {
        let radius = self
            .model_points
            .iter()
            .map(|p| p.coords.norm())
            .fold(0.0, f64::max);
        let depth = 2.0 * radius / DEFAULT_INIT_HALF_FOV_DEG.to_radians().tan();
        Pose::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, depth))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    /// Central differences with a fixed step.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LMConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Relative step size below which the solver stops.
    pub step_tolerance: f64,
    /// Reprojection RMSE (pixels) below which the solver stops.
    pub residual_tolerance: f64,
    pub jacobian: JacobianMode,
}

impl Default for LMConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            step_tolerance: 1e-10,
            residual_tolerance: 1e-12,
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<(), PnpError> {
        if self.max_iterations == 0 {
            return Err(PnpError::InvalidConfig("max_iterations must be positive"));
        }
        if !(self.initial_damping > 0.0) {
            return Err(PnpError::InvalidConfig("initial_damping must be positive"));
        }
        if !(self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err(PnpError::InvalidConfig(
                "damping factors must satisfy damping_up > 1 > damping_down > 0",
            ));
        }
        if !(self.step_tolerance > 0.0 && self.residual_tolerance > 0.0) {
            return Err(PnpError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    StepTolerance,
    ResidualTolerance,
    MaxIterations,
    /// The damped normal equations could not be solved; the best iterate is returned.
    SingularNormalEquations,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::StepTolerance | Termination::ResidualTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnPSolution {
    pub pose: Pose,
    /// Root-mean-square reprojection error per point, in pixels.
    pub rmse: f64,
    /// Number of damped linear solves attempted.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Sum of squared residuals at the start and after every accepted step.
    pub accepted_costs: Vec<f64>,
}

/// Residuals `(du₁, dv₁, du₂, dv₂, …)`, predicted minus observed.
pub fn reprojection_residuals(problem: &PnPProblem, pose: &Pose) -> Result<DVector<f64>, PnpError> {
    let k = problem.intrinsics();
    let mut r = DVector::zeros(2 * problem.len());
    for (i, (p, uv)) in problem
        .model_points
        .iter()
        .zip(&problem.image_points)
        .enumerate()
    {
        let c = pose.transform(p);
        if c.z <= MIN_DEPTH {
            return Err(CameraError::BehindCamera { index: i, z: c.z }.into());
        }
        let proj = k.project_camera_point(&c);
        r[2 * i] = proj.x - uv.x;
        r[2 * i + 1] = proj.y - uv.y;
    }
    Ok(r)
}

/// Analytic `2N × 6` Jacobian of [`reprojection_residuals`] with respect to
/// the left rotation increment and the translation increment.
pub fn jacobian(problem: &PnPProblem, pose: &Pose) -> Result<DMatrix<f64>, PnpError> {
    let k = problem.intrinsics();
    let mut j = DMatrix::zeros(2 * problem.len(), 6);
    for (i, p) in problem.model_points.iter().enumerate() {
        let rp = pose.rotation.rotate(&p.coords);
        let c = rp + pose.translation;
        if c.z <= MIN_DEPTH {
            return Err(CameraError::BehindCamera { index: i, z: c.z }.into());
        }
        let iz = 1.0 / c.z;
        // d(u,v)/dc
        let du = Vector3::new(k.fx() * iz, 0.0, -k.fx() * c.x * iz * iz);
        let dv = Vector3::new(0.0, k.fy() * iz, -k.fy() * c.y * iz * iz);
        // dc/dω = -[Rp]×, dc/dt = I
        let dc_dw = -skew(&rp);
        let du_dw = dc_dw.transpose() * du;
        let dv_dw = dc_dw.transpose() * dv;
        for a in 0..3 {
            j[(2 * i, a)] = du_dw[a];
            j[(2 * i + 1, a)] = dv_dw[a];
            j[(2 * i, 3 + a)] = du[a];
            j[(2 * i + 1, 3 + a)] = dv[a];
        }
    }
    Ok(j)
}

/// Applies a 6-vector increment `(ω, δt)` to a pose.
pub fn apply_increment(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let w = AxisAngle::new(delta[0], delta[1], delta[2]);
    Pose::new(
        axis_angle_to_rotation(&w) * pose.rotation,
        pose.translation + Vector3::new(delta[3], delta[4], delta[5]),
    )
}

fn numeric_jacobian(problem: &PnPProblem, pose: &Pose) -> Result<DMatrix<f64>, PnpError> {
    const H: f64 = 1e-6;
    let mut j = DMatrix::zeros(2 * problem.len(), 6);
    for a in 0..6 {
        let mut d = Vector6::zeros();
        d[a] = H;
        let plus = reprojection_residuals(problem, &apply_increment(pose, &d))?;
        let minus = reprojection_residuals(problem, &apply_increment(pose, &(-d)))?;
        j.set_column(a, &((plus - minus) / (2.0 * H)));
    }
    Ok(j)
}

fn cost_of(problem: &PnPProblem, pose: &Pose) -> f64 {
    reprojection_residuals(problem, pose)
        .map(|r| r.norm_squared())
        .unwrap_or(f64::INFINITY)
}

fn pose_norm(pose: &Pose) -> f64 {
    let w = pose.rotation.to_axis_angle().0;
    (w.norm_squared() + pose.translation.norm_squared()).sqrt()
}

/// Minimizes the squared reprojection error starting from `init`, or from
/// [`PnPProblem::default_init`] when `None`.
pub fn solve_pnp(
    problem: &PnPProblem,
    init: Option<&Pose>,
    config: &LMConfig,
) -> Result<PnPSolution, PnpError> {
    config.validate()?;
    let mut pose = init.copied().unwrap_or_else(|| problem.default_init());
    let mut residuals = reprojection_residuals(problem, &pose)?;
    let mut cost = residuals.norm_squared();
    let mut accepted_costs = vec![cost];
    let mut damping = config.initial_damping;
    let mut iterations = 0;

    let finish = |pose: Pose, cost: f64, iterations, termination: Termination, costs| PnPSolution {
        pose,
        rmse: (cost / problem.len() as f64).sqrt(),
        iterations,
        converged: termination.is_converged(),
        termination,
        accepted_costs: costs,
    };

    let rmse_of = |cost: f64| (cost / problem.len() as f64).sqrt();
    if rmse_of(cost) <= config.residual_tolerance {
        return Ok(finish(pose, cost, 0, Termination::ResidualTolerance, accepted_costs));
    }

    let mut normal: Option<(Matrix6<f64>, Vector6<f64>)> = None;
    while iterations < config.max_iterations {
        iterations += 1;

        let (jtj, jtr) = match normal {
            Some(n) => n,
            None => {
                let j = match config.jacobian {
                    JacobianMode::Analytic => jacobian(problem, &pose)?,
                    JacobianMode::Numeric => numeric_jacobian(problem, &pose)?,
                };
                let jt = j.transpose();
                let jtj: Matrix6<f64> = (&jt * &j).fixed_view::<6, 6>(0, 0).into_owned();
                let jtr: Vector6<f64> = (&jt * &residuals).fixed_rows::<6>(0).into_owned();
                normal = Some((jtj, jtr));
                (jtj, jtr)
            }
        };

        // Marquardt scaling: damp along the diagonal of JᵀJ
        let max_diag = jtj.diagonal().max();
        let mut damped = jtj;
        for a in 0..6 {
            damped[(a, a)] += damping * jtj[(a, a)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
        }
        let delta = match damped.cholesky() {
            Some(ch) => -ch.solve(&jtr),
            None => match damped.lu().solve(&(-jtr)) {
                Some(d) => d,
                None => {
                    return Ok(finish(
                        pose,
                        cost,
                        iterations,
                        Termination::SingularNormalEquations,
                        accepted_costs,
                    ))
                }
            },
        };
        if !delta.iter().all(|v| v.is_finite()) {
            return Ok(finish(
                pose,
                cost,
                iterations,
                Termination::SingularNormalEquations,
                accepted_costs,
            ));
        }

        let small_step =
            delta.norm() <= config.step_tolerance * (pose_norm(&pose) + config.step_tolerance);
        let trial = apply_increment(&pose, &delta);
        let trial_cost = cost_of(problem, &trial);

        if trial_cost < cost {
            pose = trial;
            cost = trial_cost;
            residuals = reprojection_residuals(problem, &pose)?;
            accepted_costs.push(cost);
            normal = None;
            damping *= config.damping_down;
            if rmse_of(cost) <= config.residual_tolerance {
                return Ok(finish(
                    pose,
                    cost,
                    iterations,
                    Termination::ResidualTolerance,
                    accepted_costs,
                ));
            }
        } else {
            damping *= config.damping_up;
        }
        if small_step {
            return Ok(finish(
                pose,
                cost,
                iterations,
                Termination::StepTolerance,
                accepted_costs,
            ));
        }
    }

    Ok(finish(pose, cost, iterations, Termination::MaxIterations, accepted_costs))
}
