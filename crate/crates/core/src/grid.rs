//! Blumensaat–Harris grid: built on the sagittal plane, projected into the scope view and
//! fine-tuned against landmark correspondences.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    exp_so3, lm_minimize, project_point, CameraFile, CameraModel, LmConfig, Vec2, Vec3, VectorProblem,
};
use crate::image::Image;

/// `m × n` grid in percent coordinates of the Blumensaat line (x) and the perpendicular
/// height (y), on the plane `z = z0` of the sagittal camera.
#[derive(Debug, Clone, PartialEq)]
pub struct BHGrid {
    pub m: usize,
    pub n: usize,
    pub z0: f64,
    /// Model units spanned by 100 % along the line.
    pub blumensaat_length: f64,
    /// Model units spanned by 100 % perpendicular to it.
    pub height: f64,
    pub camera_s: CameraModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    pub z0: f64,
    pub blumensaat_length: f64,
    pub height: f64,
    #[serde(rename = "camera_S")]
    pub camera_s: CameraFile,
}

impl BHGrid {
    pub fn new(
        m: usize,
        n: usize,
        z0: f64,
        blumensaat_length: f64,
        height: f64,
        camera_s: CameraModel,
    ) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::invalid(format!("grid must be at least 2x2, got {m}x{n}")));
        }
        if !(z0.is_finite() && blumensaat_length > 0.0 && height > 0.0) {
            return Err(Error::invalid("grid depth must be finite and extents positive"));
        }
        camera_s.validate()?;
        Ok(BHGrid {
            m,
            n,
            z0,
            blumensaat_length,
            height,
            camera_s,
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        BHGrid::new(
            spec.m,
            spec.n,
            spec.z0,
            spec.blumensaat_length,
            spec.height,
            CameraModel::try_from(&spec.camera_s)?,
        )
    }

    pub fn to_spec(&self) -> GridSpec {
        GridSpec {
            m: self.m,
            n: self.n,
            z0: self.z0,
            blumensaat_length: self.blumensaat_length,
            height: self.height,
            camera_s: CameraFile::from(&self.camera_s),
        }
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: GridSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        BHGrid::from_spec(&spec)
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Percent coordinates, row-major: `n` rows along y, `m` columns along x.
    pub fn percent_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.n {
            for i in 0..self.m {
                out.push((
                    100.0 * i as f64 / (self.m - 1) as f64,
                    100.0 * j as f64 / (self.n - 1) as f64,
                ));
            }
        }
        out
    }

    /// Grid points in the sagittal camera frame, `(x, y, z0)` in model units.
    pub fn plane_points(&self) -> Vec<Vec3> {
        self.percent_points()
            .into_iter()
            .map(|(px, py)| Vec3::new(px / 100.0 * self.blumensaat_length, py / 100.0 * self.height, self.z0))
            .collect()
    }
}

/// `p_W = R_S⁻¹·p + t_S` for each plane point.
pub fn grid_to_world(g: &BHGrid) -> Vec<Vec3> {
    let pose = g.camera_s.view_pose();
    g.plane_points().iter().map(|p| pose.camera_to_world(p)).collect()
}

fn check_depths(depths: impl Iterator<Item = f64>) -> Result<()> {
    let behind: Vec<usize> = depths
        .enumerate()
        .filter(|(_, z)| !(*z > 0.0))
        .map(|(i, _)| i)
        .collect();
    if behind.is_empty() {
        Ok(())
    } else {
        Err(Error::BehindCamera { indices: behind })
    }
}

/// Single-expression projection `Π(K_A·R_A·(R_S⁻¹·p + t_S − t_A))`, row-major.
pub fn project_grid(g: &BHGrid, cam_a: &CameraModel) -> Result<Vec<Vec2>> {
    let s = g.camera_s.view_pose();
    let a = cam_a.view_pose();
    let k = cam_a.intrinsics.matrix();
    let r_s_inv = s.rotation.transpose();
    let offset = s.translation - a.translation;
    let homog: Vec<Vec3> = g
        .plane_points()
        .iter()
        .map(|p| k * (a.rotation * (r_s_inv * p + offset)))
        .collect();
    check_depths(homog.iter().map(|h| h.z))?;
    Ok(homog.iter().map(|h| Vec2::new(h.x / h.z, h.y / h.z)).collect())
}

/// The same projection through `grid_to_world`, `world_to_camera` and `project_point`.
pub fn project_grid_stepwise(g: &BHGrid, cam_a: &CameraModel) -> Result<Vec<Vec2>> {
    let a = cam_a.view_pose();
    let cam: Vec<Vec3> = grid_to_world(g).iter().map(|p| a.world_to_camera(p)).collect();
    check_depths(cam.iter().map(|p| p.z))?;
    cam.iter().map(|p| project_point(p, &cam_a.intrinsics)).collect()
}

/// `(p_S, p_A)`: a point in the sagittal camera frame and its observed scope-image pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub p_s: [f64; 3],
    pub p_a: [f64; 2],
}

/// Scope camera adjusted by `(δR, δt)`: rotation `R_A·exp([δR]×)`, centre `t_A + δt`.
pub fn adjusted_camera(cam_a: &CameraModel, delta_r: &Vec3, delta_t: &Vec3) -> CameraModel {
    let mut cam = *cam_a;
    cam.pose.rotation = cam_a.pose.rotation * exp_so3(delta_r);
    cam.pose.translation = cam_a.pose.translation + delta_t;
    cam
}

/// Pixel of a sagittal-frame point under the adjusted scope camera; `None` at or behind it.
fn landmark_pixel(g: &BHGrid, cam_a: &CameraModel, p_s: &Vec3, delta_r: &Vec3, delta_t: &Vec3) -> Option<Vec2> {
    let cam = adjusted_camera(cam_a, delta_r, delta_t);
    let p_c = cam
        .view_pose()
        .world_to_camera(&g.camera_s.view_pose().camera_to_world(p_s));
    (p_c.z > 0.0)
        .then(|| project_point(&p_c, &cam.intrinsics).ok())
        .flatten()
}

/// Sum of squared pixel residuals over the landmarks for the given adjustment.
pub fn projection_error(g: &BHGrid, cam_a: &CameraModel, lm: &[LandmarkPair], delta_r: &Vec3, delta_t: &Vec3) -> f64 {
    lm.iter()
        .map(
            |l| match landmark_pixel(g, cam_a, &Vec3::from(l.p_s), delta_r, delta_t) {
                Some(p) => (p - Vec2::from(l.p_a)).norm_squared(),
                None => f64::INFINITY,
            },
        )
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRefinement {
    pub delta_r: [f64; 3],
    pub delta_t: [f64; 3],
    pub initial_error: f64,
    pub final_error: f64,
    /// Per-landmark pixel RMSE after refinement.
    pub rmse: f64,
    pub error_trace: Vec<f64>,
    pub pixels: Vec<[f64; 2]>,
}

/// Residual for a landmark behind the adjusted camera: large, finite, so the solver
/// rejects the step instead of failing.
const BEHIND_PENALTY: f64 = 1e6;

/// Minimizes the landmark reprojection error over `(δR, δt)` and reprojects the grid with
/// the adjusted scope camera.
pub fn refine_projection(
    g: &BHGrid,
    cam_a: &CameraModel,
    lm: &[LandmarkPair],
    cfg: &LmConfig,
) -> Result<GridRefinement> {
    if lm.len() < 3 {
        return Err(Error::invalid(format!(
            "grid refinement needs at least 3 landmark pairs, got {}",
            lm.len()
        )));
    }
    if lm.iter().any(|l| l.p_s.iter().chain(&l.p_a).any(|v| !v.is_finite())) {
        return Err(Error::invalid("landmark coordinates must be finite"));
    }
    // collinearity: smallest eigenvalue of the pixel scatter
    let n = lm.len() as f64;
    let mean = lm.iter().fold(Vec2::zeros(), |a, l| a + Vec2::from(l.p_a)) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for l in lm {
        let d = Vec2::from(l.p_a) - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = (sxx + syy) / n;
    let det = (sxx * syy - sxy * sxy) / (n * n);
    let lambda_min = tr / 2.0 - ((tr * tr / 4.0 - det).max(0.0)).sqrt();
    if lambda_min < 1e-6 * tr.max(1e-12) {
        return Err(Error::invalid("landmark pixels are collinear"));
    }

    let split = |x: &DVector<f64>| (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]));
    let problem = VectorProblem::new(6, |x: &DVector<f64>| {
        let (dr, dt) = split(x);
        let mut r = DVector::zeros(2 * lm.len());
        for (k, l) in lm.iter().enumerate() {
            match landmark_pixel(g, cam_a, &Vec3::from(l.p_s), &dr, &dt) {
                Some(p) => {
                    r[2 * k] = p.x - l.p_a[0];
                    r[2 * k + 1] = p.y - l.p_a[1];
                }
                None => {
                    r[2 * k] = BEHIND_PENALTY;
                    r[2 * k + 1] = BEHIND_PENALTY;
                }
            }
        }
        Ok(r)
    });
    let zero = (Vec3::zeros(), Vec3::zeros());
    let initial_error = projection_error(g, cam_a, lm, &zero.0, &zero.1);
    if !initial_error.is_finite() {
        return Err(Error::BehindCamera {
            indices: lm
                .iter()
                .enumerate()
                .filter(|(_, l)| landmark_pixel(g, cam_a, &Vec3::from(l.p_s), &zero.0, &zero.1).is_none())
                .map(|(i, _)| i)
                .collect(),
        });
    }
    let report = lm_minimize(&problem, DVector::zeros(6), cfg)?;
    let (dr, dt) = split(&report.params);
    let final_error = projection_error(g, cam_a, lm, &dr, &dt);
    if !(final_error <= initial_error) {
        return Err(Error::NumericalFailure {
            message: format!("grid refinement increased the error: {initial_error} -> {final_error}"),
            best: Some(vec![0.0; 6]),
        });
    }
    let pixels = project_grid(g, &adjusted_camera(cam_a, &dr, &dt))?;
    Ok(GridRefinement {
        delta_r: dr.into(),
        delta_t: dt.into(),
        initial_error,
        final_error,
        rmse: (final_error / n).sqrt(),
        error_trace: report.cost_history,
        pixels: pixels.iter().map(|p| [p.x, p.y]).collect(),
    })
}

/// True when every grid cell keeps the orientation of the first one (no fold-over).
pub fn grid_is_fold_free(pixels: &[Vec2], m: usize, n: usize) -> bool {
    if pixels.len() != m * n || m < 2 || n < 2 {
        return false;
    }
    let at = |i: usize, j: usize| pixels[j * m + i];
    let mut sign = 0.0f64;
    for j in 0..n - 1 {
        for i in 0..m - 1 {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            // shoelace area of the quad
            let area =
                (a.x * b.y - b.x * a.y) + (b.x * c.y - c.x * b.y) + (c.x * d.y - d.x * c.y) + (d.x * a.y - a.x * d.y);
            if area == 0.0 {
                return false;
            }
            if sign == 0.0 {
                sign = area.signum();
            } else if area.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Copy of `frame` with a 2-px cross at each in-bounds point.
pub fn draw_overlay(frame: &Image, pixels: &[Vec2], color: [u8; 3]) -> Image {
    let mut out = frame.clone();
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    for p in pixels {
        let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
        for d in -2..=2i64 {
            for (x, y) in [(cx + d, cy), (cx, cy + d)] {
                if x >= 0 && y >= 0 && x < w && y < h {
                    out.set(x as usize, y as usize, color);
                }
            }
        }
    }
    out
}

/// Point list written next to an overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoints {
    pub m: usize,
    pub n: usize,
    /// Row-major percent coordinates.
    pub percent: Vec<[f64; 2]>,
    pub pixels: Vec<[f64; 2]>,
}

impl GridPoints {
    pub fn new(g: &BHGrid, pixels: &[Vec2]) -> Self {
        GridPoints {
            m: g.m,
            n: g.n,
            percent: g.percent_points().into_iter().map(|(x, y)| [x, y]).collect(),
            pixels: pixels.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}
