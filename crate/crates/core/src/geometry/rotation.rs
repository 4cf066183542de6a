//! Rotation matrices, axis-angle maps and unit quaternions.
//!
//! Conventions: right-handed frames, column vectors, active rotations.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Rotation about the local z axis by `alpha` radians (the arthroscope's angular offset).
pub fn angular_offset_rotation(alpha: f64) -> Mat3 {
    let (s, c) = alpha.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Applies the angular offset to a scope rotation: `R_v = R_s · R_o(alpha)`.
pub fn compose_offset(r_s: &Mat3, alpha: f64) -> Mat3 {
    r_s * angular_offset_rotation(alpha)
}

/// Quaternion form of [`compose_offset`]: `q_v = q_s · q_o(alpha)`.
pub fn compose_offset_quaternion(q_s: &UnitQuaternion, alpha: f64) -> UnitQuaternion {
    q_s.mul(&UnitQuaternion::from_axis_angle(&Vec3::z(), alpha))
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn exp_so3(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let k = skew(omega);
    if theta < 1e-8 {
        // second-order Taylor expansion
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

pub fn log_so3(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-8 {
        return 0.5 * w;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // near pi the antisymmetric part vanishes; recover the axis from the symmetric part
        let q = UnitQuaternion::from_rotation_matrix(r);
        let v = Vec3::new(q.x, q.y, q.z);
        let n = v.norm();
        if n < 1e-12 {
            return Vec3::zeros();
        }
        return v / n * theta;
    }
    w * (theta / (2.0 * theta.sin()))
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return *r,
    };
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut fix = Mat3::identity();
        fix[(2, 2)] = -1.0;
        out = u * fix * vt;
    }
    out
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let ortho = (r.transpose() * r - Mat3::identity()).norm();
    let det = r.determinant();
    r.iter().all(|v| v.is_finite()) && ortho <= tol && (det - 1.0).abs() <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-15 {
            return Err(Error::invalid("quaternion norm must be finite and non-zero"));
        }
        Ok(UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        UnitQuaternion {
            w: c,
            x: a.x * s,
            y: a.y * s,
            z: a.z * s,
        }
    }

    /// Shepperd's method.
    pub fn from_rotation_matrix(r: &Mat3) -> Self {
        let tr = r.trace();
        let (w, x, y, z);
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn to_rotation_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Hamilton product `self · rhs`.
    pub fn mul(&self, rhs: &UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, rhs);
        UnitQuaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn offset_zero_is_identity() {
        assert_eq!(angular_offset_rotation(0.0), Mat3::identity());
    }

    #[test]
    fn offset_quarter_turn_maps_x_to_y() {
        let v = angular_offset_rotation(FRAC_PI_2) * Vec3::x();
        assert!((v - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn exp_log_round_trip() {
        for w in [
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(1e-10, 0.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
        ] {
            let r = exp_so3(&w);
            assert!(is_rotation(&r, 1e-12));
            assert!((log_so3(&r) - w).norm() < 1e-9, "{w:?}");
        }
    }

    #[test]
    fn quaternion_matrix_round_trip() {
        let r = exp_so3(&Vec3::new(0.4, -1.1, 2.0));
        let q = UnitQuaternion::from_rotation_matrix(&r);
        assert!((q.norm() - 1.0).abs() < 1e-12);
        assert!((q.to_rotation_matrix() - r).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = exp_so3(&Vec3::new(0.3, 0.2, 0.1));
        r[(0, 1)] += 1e-4;
        let fixed = orthonormalize(&r);
        assert!(is_rotation(&fixed, 1e-12));
    }
}
