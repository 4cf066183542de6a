//! Camera geometry: intrinsics, lens distortion, poses, view frustum and
//! a generic Levenberg–Marquardt solver.

mod camera;
pub mod lm;
mod pose_opt;
mod rotation;

pub use camera::{
    build_projection_matrix, distort_point, project_point, undistort_point, world_to_camera, CameraFile,
    CameraIntrinsics, CameraModel, DistortionCoefficients, Frustum, Mat4, Pose, Vec2,
};
pub use lm::{fd_jacobian, lm_minimize, LeastSquaresProblem, LmConfig, LmReport, Termination, VectorProblem};
pub use pose_opt::{optimize_camera_pose, project_with_distortion, reprojection_rmse, PoseEstimate};
pub use rotation::{
    angular_offset_rotation, compose_offset, compose_offset_quaternion, exp_so3, is_rotation, log_so3, orthonormalize,
    rotation_angle_between, skew, Mat3, UnitQuaternion, Vec3,
};
