//! Camera pose refinement by reprojection-error minimization.

use nalgebra::DVector;

use super::camera::{distort_point, CameraIntrinsics, DistortionCoefficients, Pose, Vec2};
use super::lm::{lm_minimize, LeastSquaresProblem, LmConfig, LmReport};
use super::rotation::{exp_so3, orthonormalize, Vec3};
use crate::error::{Error, Result};

/// Full camera projection including lens distortion.
pub fn project_with_distortion(
    p_w: &Vec3,
    pose: &Pose,
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> Result<Vec2> {
    let p_c = pose.world_to_camera(p_w);
    if !(p_c.z.abs() > 1e-12) {
        return Err(Error::BehindCamera { indices: vec![0] });
    }
    let n = distort_point(&Vec2::new(p_c.x / p_c.z, p_c.y / p_c.z), d)?;
    Ok(k.pixel_from_normalized(&n))
}

struct ReprojectionProblem<'a> {
    points: &'a [Vec3],
    pixels: &'a [Vec2],
    k: &'a CameraIntrinsics,
    d: &'a DistortionCoefficients,
}

impl LeastSquaresProblem for ReprojectionProblem<'_> {
    type Params = Pose;

    fn dof(&self) -> usize {
        6
    }

    fn residuals(&self, pose: &Pose) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(2 * self.points.len());
        for (i, (p, px)) in self.points.iter().zip(self.pixels).enumerate() {
            let proj = match project_with_distortion(p, pose, self.k, self.d) {
                Ok(v) => v,
                Err(_) => Vec2::new(f64::NAN, f64::NAN),
            };
            r[2 * i] = proj.x - px.x;
            r[2 * i + 1] = proj.y - px.y;
        }
        Ok(r)
    }

    fn retract(&self, pose: &Pose, delta: &DVector<f64>) -> Pose {
        let omega = Vec3::new(delta[0], delta[1], delta[2]);
        Pose {
            rotation: orthonormalize(&(exp_so3(&omega) * pose.rotation)),
            translation: pose.translation + Vec3::new(delta[3], delta[4], delta[5]),
        }
    }

    fn coordinate_magnitude(&self, pose: &Pose, i: usize) -> f64 {
        if i >= 3 {
            pose.translation[i - 3].abs()
        } else {
            0.0
        }
    }

    fn flatten(&self, pose: &Pose) -> Vec<f64> {
        pose.rotation.iter().chain(pose.translation.iter()).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Root-mean-square reprojection error in pixels.
    pub rmse: f64,
    pub report: LmReport<Pose>,
}

pub fn reprojection_rmse(
    points: &[Vec3],
    pixels: &[Vec2],
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    pose: &Pose,
) -> Result<f64> {
    let mut sum = 0.0;
    for (p, px) in points.iter().zip(pixels) {
        sum += (project_with_distortion(p, pose, k, d)? - px).norm_squared();
    }
    Ok((sum / points.len().max(1) as f64).sqrt())
}

/// Refines `pose0` so that the projections of `points3d` land on `pixels`.
pub fn optimize_camera_pose(
    points3d: &[Vec3],
    pixels: &[Vec2],
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    pose0: &Pose,
    cfg: &LmConfig,
) -> Result<PoseEstimate> {
    if points3d.len() != pixels.len() {
        return Err(Error::invalid(format!(
            "{} model points but {} pixels",
            points3d.len(),
            pixels.len()
        )));
    }
    if points3d.len() < 3 {
        return Err(Error::invalid("pose optimization needs at least 3 correspondences"));
    }
    if !pose0.is_valid() {
        return Err(Error::invalid("initial pose is not a valid rigid transform"));
    }
    let problem = ReprojectionProblem {
        points: points3d,
        pixels,
        k,
        d,
    };
    let report = lm_minimize(&problem, *pose0, cfg)?;
    let pose = report.params;
    let rmse = (report.cost / points3d.len() as f64).sqrt();
    if !rmse.is_finite() || !pose.is_valid() {
        return Err(Error::NumericalFailure {
            message: "pose optimization diverged".into(),
            best: Some(problem.flatten(&pose)),
        });
    }
    Ok(PoseEstimate { pose, rmse, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Vec<Vec3>, CameraIntrinsics, DistortionCoefficients, Pose) {
        let pts: Vec<Vec3> = (0..20)
            .map(|i| {
                let a = i as f64 * 0.7;
                Vec3::new(a.cos() * 0.8, (a * 1.3).sin() * 0.6, (a * 0.5).cos() * 0.4)
            })
            .collect();
        let k = CameraIntrinsics::new(300.0, 310.0, 160.0, 120.0, 0.0).unwrap();
        let d = DistortionCoefficients::from_array([-0.1, 0.01, 0.001, 0.0005, 0.0]);
        let pose = Pose::look_at(&Vec3::new(0.4, -0.3, 3.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        (pts, k, d, pose)
    }

    #[test]
    fn exact_start_stays_put() {
        let (pts, k, d, pose) = setup();
        let px: Vec<Vec2> = pts
            .iter()
            .map(|p| project_with_distortion(p, &pose, &k, &d).unwrap())
            .collect();
        let est = optimize_camera_pose(&pts, &px, &k, &d, &pose, &LmConfig::default()).unwrap();
        assert!(est.rmse <= 1e-9);
        assert!((est.pose.rotation - pose.rotation).norm() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let (pts, k, d, pose) = setup();
        let px = vec![Vec2::zeros(); 2];
        assert!(matches!(
            optimize_camera_pose(&pts[..2], &px, &k, &d, &pose, &LmConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
