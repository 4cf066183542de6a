use nalgebra::{Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use super::rotation::{compose_offset, is_rotation, orthonormalize, Mat3, Vec3};
use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat4 = Matrix4<f64>;

/// Pinhole intrinsics in pixel units. Pixel origin is the top-left corner, x right, y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy, skew };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "intrinsics need finite values and positive focal lengths, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Intrinsics for the same lens sampled at `factor` times the resolution.
    pub fn scaled(&self, factor: f64) -> Self {
        CameraIntrinsics {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            skew: self.skew * factor,
        }
    }

    pub fn pixel_from_normalized(&self, n: &Vec2) -> Vec2 {
        Vec2::new(self.fx * n.x + self.skew * n.y + self.cx, self.fy * n.y + self.cy)
    }

    pub fn normalized_from_pixel(&self, p: &Vec2) -> Vec2 {
        let y = (p.y - self.cy) / self.fy;
        let x = (p.x - self.cx - self.skew * y) / self.fx;
        Vec2::new(x, y)
    }
}

/// Camera-space point to pixel: homogeneous product with K, then perspective divide.
pub fn project_point(p_c: &Vec3, k: &CameraIntrinsics) -> Result<Vec2> {
    if !(p_c.z.abs() > 1e-12) {
        return Err(Error::BehindCamera { indices: vec![0] });
    }
    let h = k.matrix() * p_c;
    Ok(Vec2::new(h.x / h.z, h.y / h.z))
}

/// Brown–Conrady coefficients, ordered `[k1, k2, p1, p2, k3]` on disk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL: f64 = 1e-10;

impl DistortionCoefficients {
    pub fn from_array(a: [f64; 5]) -> Self {
        DistortionCoefficients {
            k1: a[0],
            k2: a[1],
            p1: a[2],
            p2: a[3],
            k3: a[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&c| c == 0.0)
    }

    fn radial(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    fn tangential(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        (
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            2.0 * self.p2 * x * y + self.p1 * (r2 + 2.0 * y * y),
        )
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let radial = self.radial(x * x + y * y);
        let (dx, dy) = self.tangential(x, y);
        (x * radial + dx, y * radial + dy)
    }
}

pub fn distort_point(p: &Vec2, d: &DistortionCoefficients) -> Result<Vec2> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(Error::invalid("distort_point: non-finite coordinates"));
    }
    if d.to_array().iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("distortion coefficients must be finite"));
    }
    let (x, y) = d.apply(p.x, p.y);
    Ok(Vec2::new(x, y))
}

/// Inverts [`distort_point`] by fixed-point iteration `x <- (x_d - tangential(x)) / radial(x)`.
pub fn undistort_point(p: &Vec2, d: &DistortionCoefficients) -> Result<Vec2> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(Error::invalid("undistort_point: non-finite coordinates"));
    }
    if d.is_zero() {
        return Ok(*p);
    }
    let (mut x, mut y) = (p.x, p.y);
    for _ in 0..UNDISTORT_MAX_ITERS {
        let radial = d.radial(x * x + y * y);
        let (dx, dy) = d.tangential(x, y);
        let nx = (p.x - dx) / radial;
        let ny = (p.y - dy) / radial;
        if !(nx.is_finite() && ny.is_finite()) {
            break;
        }
        let step = (nx - x).hypot(ny - y);
        x = nx;
        y = ny;
        if step < UNDISTORT_TOL {
            return Ok(Vec2::new(x, y));
        }
    }
    let (rx, ry) = d.apply(x, y);
    if (rx - p.x).hypot(ry - p.y) <= 1e-8 {
        return Ok(Vec2::new(x, y));
    }
    Err(Error::NumericalFailure {
        message: format!("undistortion did not converge in {UNDISTORT_MAX_ITERS} iterations"),
        best: Some(vec![x, y]),
    })
}

/// Rigid transform with `p_C = R (p_W - t)`: `t` is the camera centre in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub const ROTATION_TOL: f64 = 1e-9;

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation, Self::ROTATION_TOL) {
            return Err(Error::invalid("pose rotation is not orthonormal with det +1"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose translation must be finite"));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`; image y points away from `up`.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::invalid("look_at: eye and target coincide"));
        }
        let z = forward.normalize();
        let down = -up;
        let y = down - z * down.dot(&z);
        if y.norm() < 1e-9 {
            return Err(Error::invalid("look_at: up vector parallel to viewing direction"));
        }
        let y = y.normalize();
        let x = y.cross(&z);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Pose::new(rotation, *eye)
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation, Self::ROTATION_TOL) && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Viewing direction in world coordinates.
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn world_to_camera(&self, p_w: &Vec3) -> Vec3 {
        self.rotation * (p_w - self.translation)
    }

    pub fn camera_to_world(&self, p_c: &Vec3) -> Vec3 {
        self.rotation.transpose() * p_c + self.translation
    }

    pub fn orthonormalized(&self) -> Self {
        Pose {
            rotation: orthonormalize(&self.rotation),
            translation: self.translation,
        }
    }
}

pub fn world_to_camera(p_w: &Vec3, pose: &Pose) -> Vec3 {
    pose.world_to_camera(p_w)
}

/// Perspective view volume: near/far distances, vertical field of view and aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    pub near: f64,
    pub far: f64,
    pub fov: f64,
    pub aspect: f64,
}

impl Frustum {
    pub fn new(near: f64, far: f64, fov: f64, aspect: f64) -> Result<Self> {
        let f = Frustum { near, far, fov, aspect };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::invalid(format!(
                "frustum needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::invalid("frustum field of view must lie in (0, pi)"));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(Error::invalid("frustum aspect must be positive"));
        }
        Ok(())
    }

    /// Field of view of a lens with focal length `focal_mm` over a sensor of size `sensor_mm`.
    pub fn fov_from_lens(focal_mm: f64, sensor_mm: f64) -> f64 {
        2.0 * (sensor_mm / (2.0 * focal_mm)).atan()
    }
}

pub fn build_projection_matrix(fr: &Frustum) -> Result<Mat4> {
    let (n, f) = (fr.near, fr.far);
    if n == f {
        return Err(Error::invalid("degenerate frustum: near == far"));
    }
    fr.validate()?;
    let cot = 1.0 / (fr.fov * 0.5).tan();
    let mut p = Mat4::zeros();
    p[(0, 0)] = cot / fr.aspect;
    p[(1, 1)] = cot;
    p[(2, 2)] = (f + n) / (n - f);
    p[(2, 3)] = 2.0 * f * n / (n - f);
    p[(3, 2)] = -1.0;
    Ok(p)
}

/// Full virtual-camera description: intrinsics, lens distortion, view volume,
/// angular offset and the scope pose `(R_s, t_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoefficients,
    pub frustum: Frustum,
    /// Angular offset of the scope optics, radians.
    pub alpha: f64,
    pub pose: Pose,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.frustum.validate()?;
        if !self.alpha.is_finite() {
            return Err(Error::invalid("angular offset must be finite"));
        }
        if !self.pose.is_valid() {
            return Err(Error::invalid("camera pose is not a valid rigid transform"));
        }
        Ok(())
    }

    /// Pose of the virtual camera after applying the angular offset; translation is unchanged.
    pub fn view_pose(&self) -> Pose {
        Pose {
            rotation: compose_offset(&self.pose.rotation, self.alpha),
            translation: self.pose.translation,
        }
    }

    pub fn with_pose(&self, pose: Pose) -> Self {
        CameraModel { pose, ..*self }
    }

    /// Pinhole projection of a world point (no lens distortion).
    pub fn project_world(&self, p_w: &Vec3) -> Result<Vec2> {
        project_point(&self.view_pose().world_to_camera(p_w), &self.intrinsics)
    }
}

/// On-disk camera description shared by every file producer and consumer in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default)]
    pub dist: [f64; 5],
    pub near: f64,
    pub far: f64,
    pub fov_deg: f64,
    pub aspect: f64,
    #[serde(default)]
    pub alpha_deg: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl TryFrom<&CameraFile> for CameraModel {
    type Error = Error;

    fn try_from(f: &CameraFile) -> Result<Self> {
        let intrinsics = CameraIntrinsics::new(f.fx, f.fy, f.cx, f.cy, f.skew)?;
        let frustum = Frustum::new(f.near, f.far, f.fov_deg.to_radians(), f.aspect)?;
        let rotation = Mat3::from_row_slice(&f.r);
        let pose = Pose::new(rotation, Vec3::from_column_slice(&f.t))?;
        let cam = CameraModel {
            intrinsics,
            distortion: DistortionCoefficients::from_array(f.dist),
            frustum,
            alpha: f.alpha_deg.to_radians(),
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<&CameraModel> for CameraFile {
    fn from(c: &CameraModel) -> Self {
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = c.pose.rotation[(row, col)];
            }
        }
        CameraFile {
            fx: c.intrinsics.fx,
            fy: c.intrinsics.fy,
            cx: c.intrinsics.cx,
            cy: c.intrinsics.cy,
            skew: c.intrinsics.skew,
            dist: c.distortion.to_array(),
            near: c.frustum.near,
            far: c.frustum.far,
            fov_deg: c.frustum.fov.to_degrees(),
            aspect: c.frustum.aspect,
            alpha_deg: c.alpha.to_degrees(),
            r,
            t: [c.pose.translation.x, c.pose.translation.y, c.pose.translation.z],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::angular_offset_rotation;
    use std::f64::consts::FRAC_PI_2;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 0.0).unwrap()
    }

    #[test]
    fn zero_distortion_is_identity() {
        let p = Vec2::new(0.3, -0.7);
        assert_eq!(distort_point(&p, &DistortionCoefficients::default()).unwrap(), p);
    }

    #[test]
    fn radial_k1_example() {
        let d = DistortionCoefficients {
            k1: 0.1,
            ..Default::default()
        };
        let out = distort_point(&Vec2::new(0.5, 0.0), &d).unwrap();
        assert!((out.x - 0.5125).abs() < 1e-15 && out.y == 0.0);
    }

    #[test]
    fn tangential_p1_example() {
        let d = DistortionCoefficients {
            p1: 0.1,
            ..Default::default()
        };
        let out = distort_point(&Vec2::new(0.5, 0.0), &d).unwrap();
        assert!((out.x - 0.5).abs() < 1e-15);
        assert!((out.y - 0.025).abs() < 1e-15);
    }

    #[test]
    fn distort_rejects_nan() {
        let d = DistortionCoefficients::default();
        assert!(matches!(
            distort_point(&Vec2::new(f64::NAN, 0.0), &d),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn undistort_examples() {
        let zero = DistortionCoefficients::default();
        let p = Vec2::new(0.2, 0.1);
        assert_eq!(undistort_point(&p, &zero).unwrap(), p);

        let d = DistortionCoefficients {
            k1: 0.1,
            ..Default::default()
        };
        let out = undistort_point(&Vec2::new(0.5125, 0.0), &d).unwrap();
        assert!((out - Vec2::new(0.5, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn undistort_round_trip_grid() {
        let d = DistortionCoefficients {
            k1: -0.25,
            k2: 0.04,
            p1: 0.008,
            p2: -0.006,
            k3: 0.0,
        };
        for i in 0..5 {
            for j in 0..5 {
                let p = Vec2::new(-0.5 + 0.25 * i as f64, -0.5 + 0.25 * j as f64);
                let back = undistort_point(&distort_point(&p, &d).unwrap(), &d).unwrap();
                assert!((back - p).norm() < 1e-8, "{p:?}");
            }
        }
    }

    #[test]
    fn undistort_reports_non_convergence() {
        let d = DistortionCoefficients {
            k1: 5.0,
            ..Default::default()
        };
        assert!(matches!(
            undistort_point(&Vec2::new(3.0, 3.0), &d),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn projection_matrix_example() {
        let fr = Frustum::new(1.0, 3.0, FRAC_PI_2, 1.0).unwrap();
        let p = build_projection_matrix(&fr).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((p[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((p[(2, 2)] + 2.0).abs() < 1e-15);
        assert!((p[(2, 3)] + 3.0).abs() < 1e-15);
        assert_eq!(p[(3, 2)], -1.0);

        // a point on the near plane lands at NDC depth -1
        let h = p * nalgebra::Vector4::new(0.2, -0.1, -1.0, 1.0);
        assert!((h.z / h.w + 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_frustum_rejected() {
        let fr = Frustum {
            near: 2.0,
            far: 2.0,
            fov: 1.0,
            aspect: 1.0,
        };
        assert!(matches!(build_projection_matrix(&fr), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn world_to_camera_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(world_to_camera(&p, &Pose::identity()), p);
        let shifted = Pose::new(Mat3::identity(), p).unwrap();
        assert_eq!(world_to_camera(&p, &shifted), Vec3::zeros());
        let rz = Pose::new(angular_offset_rotation(FRAC_PI_2), Vec3::zeros()).unwrap();
        let out = world_to_camera(&Vec3::x(), &rz);
        assert!((out - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn project_point_examples() {
        let k = k100();
        let px = project_point(&Vec3::new(0.1, 0.2, 1.0), &k).unwrap();
        assert!((px - Vec2::new(60.0, 70.0)).norm() < 1e-12);
        let c = project_point(&Vec3::new(0.0, 0.0, 1.0), &k).unwrap();
        assert_eq!(c, Vec2::new(50.0, 50.0));
        assert!(matches!(
            project_point(&Vec3::new(0.1, 0.2, 0.0), &k),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(0.3, -0.2, 3.0);
        let pose = Pose::look_at(&eye, &Vec3::zeros(), &Vec3::y()).unwrap();
        let c = pose.world_to_camera(&Vec3::zeros());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
        // world up projects upward in the image (negative camera y)
        let up = pose.world_to_camera(&Vec3::new(0.0, 0.1, 0.0));
        assert!(up.y < 0.0);
    }

    #[test]
    fn camera_file_round_trip() {
        let pose = Pose::look_at(&Vec3::new(0.0, 0.5, 3.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        let cam = CameraModel {
            intrinsics: k100(),
            distortion: DistortionCoefficients::from_array([0.1, 0.01, 0.001, -0.002, 0.0]),
            frustum: Frustum::new(0.1, 10.0, 1.2, 1.0).unwrap(),
            alpha: 0.5,
            pose,
        };
        let text = serde_json::to_string(&CameraFile::from(&cam)).unwrap();
        let back: CameraFile = serde_json::from_str(&text).unwrap();
        let cam2 = CameraModel::try_from(&back).unwrap();
        assert!((cam2.pose.rotation - cam.pose.rotation).norm() < 1e-12);
        assert!((cam2.alpha - cam.alpha).abs() < 1e-12);
        assert_eq!(cam2.distortion, cam.distortion);
    }
}
