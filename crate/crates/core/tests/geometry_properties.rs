use arthronav::geometry::{
    angular_offset_rotation, compose_offset, compose_offset_quaternion, distort_point, exp_so3, lm_minimize, log_so3,
    optimize_camera_pose, project_point, project_with_distortion, reprojection_rmse, undistort_point, world_to_camera,
    CameraIntrinsics, DistortionCoefficients, LmConfig, Pose, UnitQuaternion, Vec2, Vec3, VectorProblem,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotation() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..3.0).prop_map(|(x, y, z, a)| {
        let v = Vec3::new(x, y, z);
        if v.norm() < 1e-3 {
            Vec3::zeros()
        } else {
            v.normalize() * a
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn distortion_round_trip(
        k1 in -0.3f64..0.3, k2 in -0.1f64..0.1, p1 in -0.01f64..0.01, p2 in -0.01f64..0.01, k3 in -0.02f64..0.02,
        x in -0.5f64..0.5, y in -0.5f64..0.5
    ) {
        let d = DistortionCoefficients::from_array([k1, k2, p1, p2, k3]);
        let p = Vec2::new(x, y);
        let back = undistort_point(&distort_point(&p, &d).unwrap(), &d).unwrap();
        prop_assert!((back - p).norm() <= 1e-8, "{p} -> {back}");
    }

    #[test]
    fn quaternion_and_matrix_offsets_agree(w in rotation(), alpha in -3.1f64..3.1) {
        let r = exp_so3(&w);
        let q = UnitQuaternion::from_rotation_matrix(&r);
        let via_q = compose_offset_quaternion(&q, alpha).to_rotation_matrix();
        prop_assert!((via_q - compose_offset(&r, alpha)).norm() <= 1e-9);
    }

    #[test]
    fn offset_round_trip(w in rotation(), alpha in -3.1f64..3.1) {
        let r = exp_so3(&w);
        let back = compose_offset(&r, alpha) * angular_offset_rotation(-alpha);
        prop_assert!((back - r).norm() <= 1e-9);
    }

    #[test]
    fn exp_log_inverse(w in rotation()) {
        prop_assert!((exp_so3(&log_so3(&exp_so3(&w))) - exp_so3(&w)).norm() <= 1e-9);
    }

    #[test]
    fn projection_goes_through_the_camera_frame(
        px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0, w in rotation()
    ) {
        let eye = Vec3::new(0.3, -0.2, -4.0);
        let pose = Pose::new(exp_so3(&(w * 0.2)) * Pose::look_at(&eye, &Vec3::zeros(), &Vec3::y()).unwrap().rotation, eye).unwrap();
        let k = CameraIntrinsics::new(300.0, 290.0, 128.0, 120.0, 0.3).unwrap();
        let p = Vec3::new(px, py, pz);
        let c = pose.rotation * (p - pose.translation);
        let expected = Vec2::new(300.0 * c.x / c.z + 0.3 * c.y / c.z + 128.0, 290.0 * c.y / c.z + 120.0);
        let got = project_with_distortion(&p, &pose, &k, &DistortionCoefficients::default()).unwrap();
        prop_assert!((got - expected).norm() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn two_step_projection_equals_composed_map(
        px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0, w in rotation(), skew in -1.0f64..1.0
    ) {
        let eye = Vec3::new(0.2, 0.1, -4.0);
        let pose = Pose::new(exp_so3(&(w * 0.2)) * Pose::look_at(&eye, &Vec3::zeros(), &Vec3::y()).unwrap().rotation, eye).unwrap();
        let k = CameraIntrinsics::new(310.0, 300.0, 130.0, 118.0, skew).unwrap();
        let p = Vec3::new(px, py, pz);
        let two_step = project_point(&world_to_camera(&p, &pose), &k).unwrap();
        let composed = project_with_distortion(&p, &pose, &k, &DistortionCoefficients::default()).unwrap();
        prop_assert!((two_step - composed).norm() <= 1e-10);
    }
}

#[test]
fn linear_least_squares_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (m, n) = (12, 4);
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(-5.0..5.0));
        let oracle = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        let (a2, b2) = (a.clone(), b.clone());
        let problem = VectorProblem::new(n, move |x: &DVector<f64>| Ok(&a2 * x - &b2));
        let rep = lm_minimize(&problem, DVector::zeros(n), &LmConfig::default()).unwrap();
        let err = (rep.params - &oracle).amax();
        assert!(err <= 1e-8, "max deviation {err}");
    }
}

#[test]
fn pose_recovery_from_perturbation() {
    let k = CameraIntrinsics::new(280.0, 280.0, 128.0, 128.0, 0.0).unwrap();
    let d = DistortionCoefficients::from_array([-0.08, 0.01, 0.0005, -0.0003, 0.0]);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eye = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -3.0);
        let truth = Pose::look_at(&eye, &Vec3::zeros(), &Vec3::y()).unwrap();
        let pts: Vec<Vec3> = (0..20)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let px: Vec<Vec2> = pts
            .iter()
            .map(|p| project_with_distortion(p, &truth, &k, &d).unwrap())
            .collect();
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let dir = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let start = Pose::new(
            exp_so3(&(axis * 5f64.to_radians())) * truth.rotation,
            truth.translation + dir * 0.05 * truth.translation.norm(),
        )
        .unwrap();
        let before = reprojection_rmse(&pts, &px, &k, &d, &start).unwrap();
        let est = optimize_camera_pose(&pts, &px, &k, &d, &start, &LmConfig::default()).unwrap();
        assert!(before > 5.0, "perturbation too small to be meaningful: {before}");
        assert!(est.rmse <= 0.5, "seed {seed}: rmse {}", est.rmse);
        assert!(est.report.iterations <= 100);
    }
}
