//! Feature-priority viewpoint registration.
//!
//! A candidate camera pose is scored by rendering the labeled mesh and comparing it with the
//! observed frame: `S = α·S_b + β·S_r + γ·S_t`, where `S_b` compares the articular-margin
//! curves, `S_r` is the silhouette/foreground IoU and `S_t` an intensity correlation.
//! A coarse grid search over the admissible viewpoint space is followed by a
//! finite-difference ascent with a shrinking trust region.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_so3, CameraModel, Mat3, Pose, Vec2, Vec3};
use crate::image::{GrayImage, Image, Mask};
use crate::raster::{project_margin, render, LabeledMesh, RenderOutput};
use crate::segmentation::{iou, largest_component, segment_first_frame, HsvThresholds, RegionGrowingOracle};

pub const DEFAULT_CURVE_SAMPLES: usize = 256;

/// Ordered 2D pixel curve, open or closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve2D {
    points: Vec<[f64; 2]>,
    #[serde(default)]
    closed: bool,
}

impl Curve2D {
    /// Drops consecutive duplicates (and a repeated closing point); needs ≥ 3 points left.
    pub fn new(points: Vec<Vec2>, closed: bool) -> Result<Self> {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::invalid("curve point is not finite"));
            }
            if pts.last() != Some(&[p.x, p.y]) {
                pts.push([p.x, p.y]);
            }
        }
        if closed && pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(Error::invalid(format!(
                "curve needs at least 3 distinct points, got {}",
                pts.len()
            )));
        }
        Ok(Curve2D { points: pts, closed })
    }

    pub fn points(&self) -> Vec<Vec2> {
        self.points.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    fn vertex(&self, i: usize) -> Vec2 {
        let p = self.points[i % self.points.len()];
        Vec2::new(p[0], p[1])
    }

    pub fn length(&self) -> f64 {
        (0..self.segments())
            .map(|i| (self.vertex(i + 1) - self.vertex(i)).norm())
            .sum()
    }

    /// Re-validates after deserialization.
    pub fn validated(self) -> Result<Self> {
        let closed = self.closed;
        Curve2D::new(self.points(), closed)
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Curve2D = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        c.validated()
    }
}

/// Arc-length-uniform resampling with signed three-point curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub points: Vec<Vec2>,
    pub curvature: Vec<f64>,
    pub length: f64,
    pub closed: bool,
}

/// Signed curvature of the circle through `a`, `b`, `c`.
fn menger(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let (ab, bc, ac) = ((b - a).norm(), (c - b).norm(), (c - a).norm());
    let denom = ab * bc * ac;
    if denom < 1e-300 {
        return 0.0;
    }
    let u = b - a;
    let v = c - b;
    2.0 * (u.x * v.y - u.y * v.x) / denom
}

pub fn resample_and_curvature(c: &Curve2D, n: usize) -> Result<Resampled> {
    if n < 8 {
        return Err(Error::invalid("resampling needs at least 8 samples"));
    }
    let segs = c.segments();
    let mut cum = Vec::with_capacity(segs + 1);
    cum.push(0.0);
    for i in 0..segs {
        let l = (c.vertex(i + 1) - c.vertex(i)).norm();
        cum.push(cum[i] + l);
    }
    let length = cum[segs];
    if length <= 0.0 || !length.is_finite() {
        return Err(Error::invalid("curve has zero length"));
    }
    let spacing = if c.closed {
        length / n as f64
    } else {
        length / (n - 1) as f64
    };
    let mut points = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let s = (i as f64 * spacing).min(length);
        while seg + 1 < segs && cum[seg + 1] < s {
            seg += 1;
        }
        let l = cum[seg + 1] - cum[seg];
        let f = if l > 0.0 {
            ((s - cum[seg]) / l).clamp(0.0, 1.0)
        } else {
            0.0
        };
        points.push(c.vertex(seg) + (c.vertex(seg + 1) - c.vertex(seg)) * f);
    }
    let mut curvature = vec![0.0; n];
    if c.closed {
        for i in 0..n {
            curvature[i] = menger(points[(i + n - 1) % n], points[i], points[(i + 1) % n]);
        }
    } else {
        for i in 1..n - 1 {
            curvature[i] = menger(points[i - 1], points[i], points[i + 1]);
        }
        curvature[0] = curvature[1];
        curvature[n - 1] = curvature[n - 2];
    }
    Ok(Resampled {
        points,
        curvature,
        length,
        closed: c.closed,
    })
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Vec2], b: &[Vec2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("hausdorff distance of an empty point set"));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `sup_{p ∈ a} inf_{q ∈ b} |p − q|`.
pub fn directed_hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub omega_d: f64,
    pub omega_kappa: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            alpha: 0.7,
            beta: 0.2,
            gamma: 0.1,
            lambda: 0.05,
            omega_d: 1.0,
            omega_kappa: 25.0,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.gamma,
            self.lambda,
            self.omega_d,
            self.omega_kappa,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("similarity weights must be finite"));
        }
        if !(self.alpha > self.beta && self.beta >= self.gamma && self.gamma >= 0.0) {
            return Err(Error::invalid("weights must satisfy alpha > beta >= gamma >= 0"));
        }
        if (self.alpha + self.beta + self.gamma - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("alpha + beta + gamma must equal 1"));
        }
        if self.lambda < 0.0 || self.omega_d < 0.0 || self.omega_kappa < 0.0 {
            return Err(Error::invalid("lambda, omega_d and omega_kappa must be non-negative"));
        }
        Ok(())
    }
}

/// Hausdorff term plus integrated curvature difference over the shared normalized
/// arc-length parameterization; the integral uses the step of `ba`.
pub fn shape_difference(ba: &Curve2D, bv: &Curve2D, w: &SimilarityWeights, n: usize) -> Result<f64> {
    let ra = resample_and_curvature(ba, n)?;
    let rv = resample_and_curvature(bv, n)?;
    Ok(shape_difference_resampled(&ra, &rv, w))
}

fn shape_difference_resampled(ra: &Resampled, rv: &Resampled, w: &SimilarityWeights) -> f64 {
    let n = ra.points.len();
    let d = if w.omega_d > 0.0 {
        directed_hausdorff(&ra.points, &rv.points).max(directed_hausdorff(&rv.points, &ra.points))
    } else {
        0.0
    };
    let mut integral = 0.0;
    if w.omega_kappa > 0.0 {
        if ra.closed {
            let ds = ra.length / n as f64;
            integral = (0..n).map(|i| (ra.curvature[i] - rv.curvature[i]).abs()).sum::<f64>() * ds;
        } else {
            let ds = ra.length / (n - 1) as f64;
            for i in 0..n {
                let weight = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                integral += weight * (ra.curvature[i] - rv.curvature[i]).abs();
            }
            integral *= ds;
        }
    }
    w.omega_d * d + w.omega_kappa * integral
}

pub fn boundary_similarity(ba: &Curve2D, bv: &Curve2D, w: &SimilarityWeights) -> Result<f64> {
    let d = shape_difference(ba, bv, w, DEFAULT_CURVE_SAMPLES)?;
    Ok(boundary_similarity_from_difference(d, w.lambda))
}

pub fn boundary_similarity_from_difference(d: f64, lambda: f64) -> f64 {
    (-lambda * d).exp()
}

/// Pearson correlation mapped to `[0, 1]` over the pixels selected by `overlap`.
/// An empty overlap scores 0; constant signals correlate 0 unless both are identical.
pub fn texture_similarity(a: &GrayImage, b: &GrayImage, overlap: &Mask) -> f64 {
    let idx: Vec<usize> = overlap
        .bits()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| v.then_some(i))
        .collect();
    if idx.is_empty() {
        return 0.0;
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| a.data[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| b.data[i]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (da, db) = (a.data[i] - ma, b.data[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    let r = if saa <= 1e-18 || sbb <= 1e-18 {
        let identical = idx.iter().all(|&i| (a.data[i] - b.data[i]).abs() <= 1e-12);
        if saa <= 1e-18 && sbb <= 1e-18 && identical {
            1.0
        } else {
            0.0
        }
    } else {
        (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
    };
    (r + 1.0) / 2.0
}

/// Observed-frame inputs to registration: undistorted grayscale in `[0, 1]`, foreground mask
/// and the articular-margin curve detected in the frame.
#[derive(Debug, Clone)]
pub struct RegistrationTarget {
    pub gray: GrayImage,
    pub foreground: Mask,
    pub margin: Curve2D,
}

impl RegistrationTarget {
    pub fn new(gray: GrayImage, foreground: Mask, margin: Curve2D) -> Result<Self> {
        if gray.width != foreground.width() || gray.height != foreground.height() {
            return Err(Error::invalid("grayscale image and foreground mask differ in size"));
        }
        Ok(RegistrationTarget {
            gray,
            foreground,
            margin,
        })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.gray.width, self.gray.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub score: f64,
    pub s_b: f64,
    pub s_r: f64,
    pub s_t: f64,
}

impl Similarity {
    pub fn combine(w: &SimilarityWeights, s_b: f64, s_r: f64, s_t: f64) -> Self {
        Similarity {
            score: w.alpha * s_b + w.beta * s_r + w.gamma * s_t,
            s_b,
            s_r,
            s_t,
        }
    }
}

/// Weighted similarity between the observed frame and a rendering. A missing render-side
/// margin (fewer than three visible vertices) gives `S_b = 0`.
pub fn combined_similarity(
    target: &RegistrationTarget,
    rendered: &RenderOutput,
    render_margin: Option<&Curve2D>,
    w: &SimilarityWeights,
) -> Result<Similarity> {
    let ra = resample_and_curvature(&target.margin, DEFAULT_CURVE_SAMPLES)?;
    similarity_with(target, &ra, rendered, render_margin, w)
}

fn similarity_with(
    target: &RegistrationTarget,
    target_resampled: &Resampled,
    rendered: &RenderOutput,
    render_margin: Option<&Curve2D>,
    w: &SimilarityWeights,
) -> Result<Similarity> {
    if target.size() != (rendered.width, rendered.height) {
        return Err(Error::invalid(format!(
            "frame is {:?} but rendering is {}x{}",
            target.size(),
            rendered.width,
            rendered.height
        )));
    }
    let s_b = match render_margin {
        Some(bv) => {
            let rv = resample_and_curvature(bv, target_resampled.points.len())?;
            boundary_similarity_from_difference(shape_difference_resampled(target_resampled, &rv, w), w.lambda)
        }
        None => 0.0,
    };
    let s_r = iou(&target.foreground, &rendered.silhouette)?;
    let overlap = Mask::from_bits(
        rendered.width,
        rendered.height,
        target
            .foreground
            .bits()
            .iter()
            .zip(rendered.silhouette.bits())
            .map(|(&a, &b)| a && b)
            .collect(),
    )?;
    let s_t = texture_similarity(&target.gray, &rendered.shade(), &overlap);
    Ok(Similarity::combine(w, s_b, s_r, s_t))
}

/// Axis-aligned box in model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Aabb { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn around(center: Vec3, half: [f64; 3]) -> Result<Self> {
        Aabb::new(
            [center.x - half[0], center.y - half[1], center.z - half[2]],
            [center.x + half[0], center.y + half[1], center.z + half[2]],
        )
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.min[k].is_finite() && self.max[k].is_finite() && self.min[k] < self.max[k]) {
                return Err(Error::invalid("box must be finite with min < max on every axis"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }
}

/// Admissible viewpoint space: camera position inside the approach box, looking into the target box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointPrior {
    pub approach: Aabb,
    pub target: Aabb,
}

impl ViewpointPrior {
    pub fn validate(&self) -> Result<()> {
        self.approach.validate()?;
        self.target.validate()
    }

    pub fn default_look_depth(&self) -> f64 {
        (self.target.center() - self.approach.center()).norm()
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: ViewpointPrior = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

pub fn viewpoint_admissible(t: &Pose, prior: &ViewpointPrior, look_target_depth: f64) -> bool {
    let c = t.center();
    prior.approach.contains(&c) && prior.target.contains(&(c + t.optical_axis() * look_target_depth))
}

/// `n³` camera positions on cell centres of the approach box, each looking at the
/// target-box centre.
pub fn grid_samples(prior: &ViewpointPrior, n: usize, up: &Vec3) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let target = prior.target.center();
    let a = &prior.approach;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let f =
                    |idx: usize, axis: usize| a.min[axis] + (idx as f64 + 0.5) / n as f64 * (a.max[axis] - a.min[axis]);
                let eye = Vec3::new(f(i, 0), f(j, 1), f(k, 2));
                out.push(Pose::look_at(&eye, &target, up)?);
            }
        }
    }
    Ok(out)
}

/// On-disk pose: `R` row-major and the camera centre `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let m = &p.rotation;
        PoseRecord {
            r: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = Error;
    fn try_from(r: PoseRecord) -> Result<Pose> {
        Pose::new(Mat3::from_row_slice(&r.r), Vec3::from(r.t))
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub similarity: Similarity,
    /// Number of rendered and scored poses.
    pub evaluations: usize,
    /// Candidates that passed the admissibility filter (coarse search only).
    pub admissible_samples: usize,
    pub wall_ms: f64,
}

impl RegistrationResult {
    pub fn score(&self) -> f64 {
        self.similarity.score
    }

    pub fn report(&self) -> RegistrationReport {
        RegistrationReport {
            pose: PoseRecord::from(&self.pose),
            score: self.similarity.score,
            s_b: self.similarity.s_b,
            s_r: self.similarity.s_r,
            s_t: self.similarity.s_t,
            evaluations: self.evaluations,
            wall_ms: self.wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub pose: PoseRecord,
    pub score: f64,
    pub s_b: f64,
    pub s_r: f64,
    pub s_t: f64,
    pub evaluations: usize,
    pub wall_ms: f64,
}

/// Everything needed to score a candidate pose.
pub struct Scorer<'a> {
    pub target: &'a RegistrationTarget,
    pub mesh: &'a LabeledMesh,
    pub camera: &'a CameraModel,
    pub prior: &'a ViewpointPrior,
    pub weights: SimilarityWeights,
    pub look_depth: f64,
    target_resampled: Resampled,
    evaluations: AtomicUsize,
}

impl<'a> Scorer<'a> {
    pub fn new(
        target: &'a RegistrationTarget,
        mesh: &'a LabeledMesh,
        camera: &'a CameraModel,
        prior: &'a ViewpointPrior,
        weights: SimilarityWeights,
        look_depth: Option<f64>,
    ) -> Result<Self> {
        weights.validate()?;
        prior.validate()?;
        camera.validate()?;
        mesh.validate()?;
        let look_depth = look_depth.unwrap_or_else(|| prior.default_look_depth());
        if !(look_depth.is_finite() && look_depth >= 0.0) {
            return Err(Error::invalid("look-target depth must be finite and non-negative"));
        }
        Ok(Scorer {
            target,
            mesh,
            camera,
            prior,
            weights,
            look_depth,
            target_resampled: resample_and_curvature(&target.margin, DEFAULT_CURVE_SAMPLES)?,
            evaluations: AtomicUsize::new(0),
        })
    }

    /// Admissibility is judged on the pose of the viewing direction (after the angular offset).
    pub fn admissible(&self, pose: &Pose) -> bool {
        viewpoint_admissible(&self.camera.with_pose(*pose).view_pose(), self.prior, self.look_depth)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Scores an admissible pose; `None` when the pose lies outside the viewpoint prior.
    pub fn score(&self, pose: &Pose) -> Result<Option<Similarity>> {
        if !self.admissible(pose) {
            return Ok(None);
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let cam = self.camera.with_pose(*pose);
        let out = render(self.mesh, &cam, self.target.size())?;
        // a closed target margin is an outline of the foreground; compare like with like
        let margin = if self.target.margin.is_closed() {
            outer_contour(&out.silhouette).ok()
        } else {
            match project_margin(self.mesh, &cam) {
                Ok(pts) => Curve2D::new(pts, false).ok(),
                Err(Error::EmptyCurve) => None,
                Err(e) => return Err(e),
            }
        };
        similarity_with(
            self.target,
            &self.target_resampled,
            &out,
            margin.as_ref(),
            &self.weights,
        )
        .map(Some)
    }
}

/// Scores every admissible candidate and returns the best (lowest index on ties).
pub fn coarse_register(scorer: &Scorer<'_>, samples: &[Pose]) -> Result<RegistrationResult> {
    let start = Instant::now();
    let before = scorer.evaluations();
    let scored: Vec<Option<Similarity>> = samples
        .par_iter()
        .map(|p| scorer.score(p))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, Similarity)> = None;
    let mut admissible = 0;
    for (i, s) in scored.iter().enumerate() {
        if let Some(s) = s {
            admissible += 1;
            if best.is_none_or(|(_, b)| s.score > b.score) {
                best = Some((i, *s));
            }
        }
    }
    let (idx, similarity) = best.ok_or(Error::EmptySearchSpace)?;
    log::debug!(
        "coarse search: {admissible}/{} admissible, best #{idx} S={:.4}",
        samples.len(),
        similarity.score
    );
    Ok(RegistrationResult {
        pose: samples[idx],
        similarity,
        evaluations: scorer.evaluations() - before,
        admissible_samples: admissible,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One trust-region level: rotation step (radians) and translation step (model units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLevel {
    pub rotation: f64,
    pub translation: f64,
}

/// 0.5° and 1% of the mesh diagonal, halved `halvings` times.
pub fn default_schedule(mesh_diagonal: f64, halvings: usize) -> Vec<StepLevel> {
    (0..=halvings)
        .map(|k| {
            let f = 0.5f64.powi(k as i32);
            StepLevel {
                rotation: 0.5f64.to_radians() * f,
                translation: 0.01 * mesh_diagonal * f,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub schedule: Vec<StepLevel>,
    /// Ascent iterations allowed per level before moving to the next (smaller) one.
    pub max_iters_per_level: usize,
    /// Minimum score gain that counts as an improvement.
    pub min_gain: f64,
}

impl RefineConfig {
    pub fn for_mesh(mesh: &LabeledMesh) -> Self {
        RefineConfig {
            schedule: default_schedule(mesh.diagonal(), 4),
            max_iters_per_level: 40,
            min_gain: 1e-12,
        }
    }
}

/// Rotates the camera about its own axes by `d[0..3]` and moves its centre by `d[3..6]`.
pub fn perturb_pose(p: &Pose, d: &[f64; 6]) -> Pose {
    let rot = exp_so3(&Vec3::new(d[0], d[1], d[2])) * p.rotation;
    Pose {
        rotation: rot,
        translation: p.translation + Vec3::new(d[3], d[4], d[5]),
    }
    .orthonormalized()
}

/// Local ascent from an admissible pose. Never returns a lower score than the start.
pub fn refine_register(scorer: &Scorer<'_>, init: &Pose, cfg: &RefineConfig) -> Result<RegistrationResult> {
    let start = Instant::now();
    let before = scorer.evaluations();
    let mut pose = *init;
    let mut current = scorer
        .score(&pose)?
        .ok_or_else(|| Error::invalid("initial pose lies outside the admissible viewpoint space"))?;
    for level in &cfg.schedule {
        let h = [
            level.rotation,
            level.rotation,
            level.rotation,
            level.translation,
            level.translation,
            level.translation,
        ];
        for _ in 0..cfg.max_iters_per_level {
            match ascent_step(scorer, &pose, current, &h, cfg.min_gain)? {
                Some((p, s)) => {
                    debug_assert!(s.score > current.score);
                    pose = p;
                    current = s;
                }
                None => break,
            }
        }
    }
    Ok(RegistrationResult {
        pose,
        similarity: current,
        evaluations: scorer.evaluations() - before,
        admissible_samples: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One gradient step with backtracking; falls back to the best coordinate probe.
fn ascent_step(
    scorer: &Scorer<'_>,
    pose: &Pose,
    current: Similarity,
    h: &[f64; 6],
    min_gain: f64,
) -> Result<Option<(Pose, Similarity)>> {
    let probes: Vec<(Pose, Option<Similarity>)> = (0..12)
        .into_par_iter()
        .map(|k| {
            let mut d = [0.0; 6];
            d[k / 2] = if k % 2 == 0 { h[k / 2] } else { -h[k / 2] };
            let p = perturb_pose(pose, &d);
            scorer.score(&p).map(|s| (p, s))
        })
        .collect::<Result<Vec<_>>>()?;
    // Gradient in step units; one-sided where a probe is inadmissible.
    let mut g = [0.0; 6];
    for i in 0..6 {
        g[i] = match (probes[2 * i].1, probes[2 * i + 1].1) {
            (Some(p), Some(m)) => (p.score - m.score) / 2.0,
            (Some(p), None) => p.score - current.score,
            (None, Some(m)) => current.score - m.score,
            (None, None) => 0.0,
        };
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for tau in [2.0, 1.0, 0.5] {
            let mut d = [0.0; 6];
            for i in 0..6 {
                d[i] = tau * h[i] * g[i] / norm;
            }
            let p = perturb_pose(pose, &d);
            if let Some(s) = scorer.score(&p)? {
                if s.score > current.score + min_gain {
                    return Ok(Some((p, s)));
                }
            }
        }
    }
    let best_probe = probes.iter().filter_map(|(p, s)| s.map(|s| (*p, s))).fold(
        None::<(Pose, Similarity)>,
        |acc, (p, s)| match acc {
            Some((_, b)) if b.score >= s.score => acc,
            _ => Some((p, s)),
        },
    );
    Ok(best_probe.filter(|(_, s)| s.score > current.score + min_gain))
}

/// Settings of [`register_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRegistrationConfig {
    pub thresholds: HsvThresholds,
    pub weights: SimilarityWeights,
    /// Coarse grid is `grid_n³` approach positions.
    pub grid_n: usize,
    /// World up vector of the coarse candidates.
    pub up: [f64; 3],
}

impl Default for FrameRegistrationConfig {
    fn default() -> Self {
        FrameRegistrationConfig {
            thresholds: HsvThresholds::default(),
            weights: SimilarityWeights::default(),
            grid_n: 3,
            up: [0.0, -1.0, 0.0],
        }
    }
}

/// End-to-end registration of one frame: segment the foreground, take the margin curve
/// (or the foreground outline when none is given), then coarse grid search and refinement.
pub fn register_frame(
    img: &Image,
    mesh: &LabeledMesh,
    camera: &CameraModel,
    prior: &ViewpointPrior,
    margin: Option<Curve2D>,
    cfg: &FrameRegistrationConfig,
) -> Result<RegistrationResult> {
    let clock = Instant::now();
    let seg = segment_first_frame(img, &cfg.thresholds, &RegionGrowingOracle::default())?;
    let margin = match margin {
        Some(m) => m,
        None => outer_contour(&seg.mask)?,
    };
    let target = RegistrationTarget::new(img.to_gray(), seg.mask, margin)?;
    let scorer = Scorer::new(&target, mesh, camera, prior, cfg.weights, None)?;
    let samples = grid_samples(prior, cfg.grid_n, &Vec3::from(cfg.up))?;
    let coarse = coarse_register(&scorer, &samples)?;
    let mut refined = refine_register(&scorer, &coarse.pose, &RefineConfig::for_mesh(mesh))?;
    refined.evaluations = scorer.evaluations();
    refined.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok(refined)
}

/// Outer boundary of the largest 8-connected component, traced clockwise with Moore
/// neighbourhoods; points sit at pixel centres.
pub fn outer_contour(mask: &Mask) -> Result<Curve2D> {
    let comp = largest_component(mask);
    let (w, h) = (comp.width() as i64, comp.height() as i64);
    let start = comp.bits().iter().position(|&b| b).ok_or(Error::NoForeground)?;
    let s = ((start as i64) % w, (start as i64) / w);
    const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
    let set = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && comp.get(x as usize, y as usize);
    let dir_of = |from: (i64, i64), to: (i64, i64)| {
        DIRS.iter()
            .position(|&d| (from.0 + d.0, from.1 + d.1) == to)
            .expect("neighbouring pixels")
    };
    let mut contour = vec![s];
    let mut cur = s;
    let mut back = 4; // west of the first pixel is background
    let mut first_move: Option<(i64, i64)> = None;
    let limit = 4 * comp.area() + 8;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let n = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if set(n.0, n.1) {
                let prev = (cur.0 + DIRS[(d + 7) % 8].0, cur.1 + DIRS[(d + 7) % 8].1);
                next = Some((n, prev));
                break;
            }
        }
        let Some((n, prev)) = next else { break };
        if cur == s {
            match first_move {
                None => first_move = Some(n),
                Some(f) if f == n => break,
                _ => {}
            }
        }
        back = dir_of(n, prev);
        cur = n;
        if cur != s || first_move.is_none() {
            contour.push(cur);
        }
    }
    if contour.last() == Some(&s) && contour.len() > 1 {
        contour.pop();
    }
    Curve2D::new(
        contour
            .into_iter()
            .map(|(x, y)| Vec2::new(x as f64 + 0.5, y as f64 + 0.5))
            .collect(),
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(r: f64, n: usize, center: (f64, f64)) -> Curve2D {
        Curve2D::new(
            (0..n)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / n as f64;
                    Vec2::new(center.0 + r * a.cos(), center.1 + r * a.sin())
                })
                .collect(),
            true,
        )
        .unwrap()
    }

    fn open(points: &[(f64, f64)]) -> Curve2D {
        Curve2D::new(points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), false).unwrap()
    }

    #[test]
    fn curve_validation() {
        assert!(Curve2D::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)], false).is_err());
        let c = Curve2D::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 1.0),
            ],
            false,
        )
        .unwrap();
        assert_eq!(c.len(), 3);
        let same = Curve2D::new(vec![Vec2::new(1.0, 1.0); 5], false);
        assert!(same.is_err());
    }

    #[test]
    fn straight_segment_has_zero_curvature() {
        let c = open(&[(0.0, 0.0), (3.0, 1.0), (9.0, 3.0)]);
        let r = resample_and_curvature(&c, 64).unwrap();
        assert_eq!(r.points.len(), 64);
        assert_eq!(r.points[0], Vec2::new(0.0, 0.0));
        assert!((r.points[63] - Vec2::new(9.0, 3.0)).norm() < 1e-9);
        assert!(r.curvature.iter().all(|k| k.abs() < 1e-9));
        let spacing: Vec<f64> = r.points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        assert!(spacing.iter().all(|s| (s - spacing[0]).abs() < 1e-9));
    }

    #[test]
    fn circle_curvature_matches_inverse_radius() {
        for r in [5.0, 10.0, 40.0] {
            let res = resample_and_curvature(&circle(r, 2048, (0.0, 0.0)), 256).unwrap();
            for k in &res.curvature {
                assert!((k - 1.0 / r).abs() <= 0.02 / r, "{k} vs {}", 1.0 / r);
            }
        }
    }

    #[test]
    fn resampling_rejects_bad_input() {
        let c = open(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(resample_and_curvature(&c, 7).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = vec![Vec2::new(0.0, 0.0)];
        let b = vec![Vec2::new(3.0, 4.0)];
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
        let pts: Vec<Vec2> = (0..5).map(|i| Vec2::new(i as f64, (i * i) as f64)).collect();
        assert_eq!(hausdorff(&pts, &pts).unwrap(), 0.0);
        assert!(hausdorff(&[], &pts).is_err());
    }

    #[test]
    fn hausdorff_subset_is_asymmetric() {
        let big: Vec<Vec2> = [(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (0.0, 2.0), (5.0, 5.0)]
            .iter()
            .map(|&(x, y)| Vec2::new(x, y))
            .collect();
        let small = big[..2].to_vec();
        assert_eq!(directed_hausdorff(&small, &big), 0.0);
        // brute force: farthest point of `big` from {(0,0),(1,0)} is (5,5) → |(4,5)|
        let expected = (16.0f64 + 25.0).sqrt();
        assert!((directed_hausdorff(&big, &small) - expected).abs() < 1e-12);
        assert!((hausdorff(&small, &big).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_difference_examples() {
        let w = SimilarityWeights::default();
        let c = open(&[(0.0, 0.0), (10.0, 2.0), (20.0, 10.0), (25.0, 25.0)]);
        assert!(shape_difference(&c, &c, &w, 128).unwrap().abs() < 1e-9);

        let moved = open(&[(3.0, 4.0), (13.0, 6.0), (23.0, 14.0), (28.0, 29.0)]);
        let wd = SimilarityWeights { omega_kappa: 0.0, ..w };
        assert!((shape_difference(&c, &moved, &wd, 128).unwrap() - 5.0).abs() < 1e-9);

        let wk = SimilarityWeights {
            omega_d: 0.0,
            omega_kappa: 1.0,
            ..w
        };
        let d = shape_difference(
            &circle(10.0, 2048, (0.0, 0.0)),
            &circle(20.0, 2048, (0.0, 0.0)),
            &wk,
            256,
        )
        .unwrap();
        let expected = (0.1 - 0.05) * 2.0 * PI * 10.0;
        assert!((d - expected).abs() <= 0.03 * expected, "{d} vs {expected}");
    }

    #[test]
    fn boundary_similarity_examples() {
        assert!((boundary_similarity_from_difference(5.0, 0.1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((boundary_similarity_from_difference(5.0, 0.1) - 0.6065).abs() < 1e-4);
        assert_eq!(boundary_similarity_from_difference(123.0, 0.0), 1.0);
        let c = circle(7.0, 64, (1.0, 2.0));
        assert_eq!(boundary_similarity(&c, &c, &SimilarityWeights::default()).unwrap(), 1.0);
    }

    #[test]
    fn weights_validation() {
        assert!(SimilarityWeights::default().validate().is_ok());
        let bad_order = SimilarityWeights {
            alpha: 0.2,
            beta: 0.7,
            ..SimilarityWeights::default()
        };
        assert!(bad_order.validate().is_err());
        let bad_sum = SimilarityWeights {
            alpha: 0.8,
            ..SimilarityWeights::default()
        };
        assert!(bad_sum.validate().is_err());
    }

    #[test]
    fn combine_example() {
        let s = Similarity::combine(&SimilarityWeights::default(), 1.0, 0.5, 0.0);
        assert!((s.score - 0.8).abs() < 1e-12);
    }

    fn synthetic_render(w: usize, h: usize, disc: (f64, f64, f64)) -> RenderOutput {
        let mut depth = vec![f64::INFINITY; w * h];
        let mut region = vec![None; w * h];
        let sil = Mask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - disc.0, y as f64 + 0.5 - disc.1);
            dx * dx + dy * dy <= disc.2 * disc.2
        });
        for y in 0..h {
            for x in 0..w {
                if sil.get(x, y) {
                    let (dx, dy) = (x as f64 + 0.5 - disc.0, y as f64 + 0.5 - disc.1);
                    depth[y * w + x] = 2.0 + 0.01 * (dx * dx + dy * dy);
                    region[y * w + x] = Some(crate::AnatomicalRegion::LateralCondyle);
                }
            }
        }
        RenderOutput {
            width: w,
            height: h,
            silhouette: sil,
            depth,
            region_map: region,
        }
    }

    fn shift_render(r: &RenderOutput, dx: i64, dy: i64) -> RenderOutput {
        let mut out = synthetic_render(r.width, r.height, (-1e9, -1e9, 0.0));
        for y in 0..r.height as i64 {
            for x in 0..r.width as i64 {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < r.width as i64 && ny < r.height as i64 {
                    let (i, j) = ((y as usize) * r.width + x as usize, ny as usize * r.width + nx as usize);
                    out.depth[j] = r.depth[i];
                    out.region_map[j] = r.region_map[i];
                    out.silhouette
                        .set(nx as usize, ny as usize, r.silhouette.get(x as usize, y as usize));
                }
            }
        }
        out
    }

    fn arc(center: (f64, f64), r: f64) -> Curve2D {
        Curve2D::new(
            (0..40)
                .map(|i| {
                    let a = PI * i as f64 / 39.0;
                    Vec2::new(center.0 + r * a.cos(), center.1 - r * a.sin())
                })
                .collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn perfect_match_scores_one() {
        let r = synthetic_render(48, 40, (24.0, 20.0, 12.0));
        let margin = arc((24.0, 20.0), 10.0);
        let target = RegistrationTarget::new(r.shade(), r.silhouette.clone(), margin.clone()).unwrap();
        let s = combined_similarity(&target, &r, Some(&margin), &SimilarityWeights::default()).unwrap();
        assert_eq!((s.s_b, s.s_r), (1.0, 1.0));
        assert!((s.s_t - 1.0).abs() < 1e-12);
        assert!((s.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_overlap_scores_zero() {
        let r = synthetic_render(48, 40, (10.0, 10.0, 5.0));
        let other = synthetic_render(48, 40, (38.0, 30.0, 5.0));
        let margin = arc((24.0, 20.0), 10.0);
        let target = RegistrationTarget::new(other.shade(), other.silhouette.clone(), margin).unwrap();
        let s = combined_similarity(&target, &r, None, &SimilarityWeights::default()).unwrap();
        assert_eq!((s.s_b, s.s_r, s.s_t, s.score), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let r = synthetic_render(48, 40, (24.0, 20.0, 12.0));
        let small = synthetic_render(40, 40, (20.0, 20.0, 12.0));
        let target = RegistrationTarget::new(small.shade(), small.silhouette, arc((20.0, 20.0), 5.0)).unwrap();
        assert!(combined_similarity(&target, &r, None, &SimilarityWeights::default()).is_err());
    }

    #[test]
    fn similarity_is_translation_invariant() {
        let obs = synthetic_render(64, 64, (30.0, 30.0, 13.0));
        let ren = synthetic_render(64, 64, (33.0, 29.0, 12.0));
        let margin_obs = arc((30.0, 30.0), 11.0);
        let margin_ren = arc((33.5, 28.0), 10.0);
        let w = SimilarityWeights::default();
        let t0 = RegistrationTarget::new(obs.shade(), obs.silhouette.clone(), margin_obs.clone()).unwrap();
        let s0 = combined_similarity(&t0, &ren, Some(&margin_ren), &w).unwrap();

        let shift =
            |c: &Curve2D| Curve2D::new(c.points().iter().map(|p| p + Vec2::new(5.0, 5.0)).collect(), false).unwrap();
        let obs5 = shift_render(&obs, 5, 5);
        let ren5 = shift_render(&ren, 5, 5);
        let t1 = RegistrationTarget::new(obs5.shade(), obs5.silhouette.clone(), shift(&margin_obs)).unwrap();
        let s1 = combined_similarity(&t1, &ren5, Some(&shift(&margin_ren)), &w).unwrap();
        assert!((s0.score - s1.score).abs() < 1e-9, "{s0:?} vs {s1:?}");
        assert!(s0.score < 1.0);
    }

    #[test]
    fn texture_similarity_edge_cases() {
        let a = GrayImage::new(4, 4, 0.5);
        let all = Mask::from_fn(4, 4, |_, _| true);
        assert_eq!(texture_similarity(&a, &a, &all), 1.0);
        let b = GrayImage::new(4, 4, 0.7);
        assert_eq!(texture_similarity(&a, &b, &all), 0.5);
        assert_eq!(texture_similarity(&a, &b, &Mask::new(4, 4)), 0.0);
        let mut ramp = GrayImage::new(4, 4, 0.0);
        let mut inv = GrayImage::new(4, 4, 0.0);
        for i in 0..16 {
            ramp.data[i] = i as f64;
            inv.data[i] = -(i as f64);
        }
        assert!(texture_similarity(&ramp, &inv, &all).abs() < 1e-12);
    }

    fn prior() -> ViewpointPrior {
        ViewpointPrior {
            approach: Aabb::new([-1.0, -1.0, -6.0], [1.0, 1.0, -4.0]).unwrap(),
            target: Aabb::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).unwrap(),
        }
    }

    #[test]
    fn admissibility_examples() {
        let p = prior();
        let depth = p.default_look_depth();
        let up = Vec3::new(0.0, -1.0, 0.0);
        let centre = Pose::look_at(&p.approach.center(), &p.target.center(), &up).unwrap();
        assert!(viewpoint_admissible(&centre, &p, depth));
        let outside = Pose::look_at(&Vec3::new(0.0, 0.0, -8.0), &Vec3::zeros(), &up).unwrap();
        assert!(!viewpoint_admissible(&outside, &p, depth));
        // inside R_a but aimed far to the side: the axis exits the target box
        let aside = Pose::look_at(&p.approach.center(), &Vec3::new(5.0, 0.0, 0.0), &up).unwrap();
        assert!(!viewpoint_admissible(&aside, &p, depth));
        assert!(Aabb::new([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn grid_samples_cover_the_box() {
        let p = prior();
        let s = grid_samples(&p, 3, &Vec3::new(0.0, -1.0, 0.0)).unwrap();
        assert_eq!(s.len(), 27);
        assert!((s[13].center() - p.approach.center()).norm() < 1e-12);
        assert!(s.iter().all(|q| viewpoint_admissible(q, &p, p.default_look_depth())));
    }

    #[test]
    fn pose_record_round_trip() {
        let pose = Pose::look_at(&Vec3::new(1.0, 2.0, -3.0), &Vec3::zeros(), &Vec3::new(0.0, -1.0, 0.0)).unwrap();
        let json = serde_json::to_string(&PoseRecord::from(&pose)).unwrap();
        let back: Pose = serde_json::from_str::<PoseRecord>(&json).unwrap().try_into().unwrap();
        assert!((back.rotation - pose.rotation).norm() < 1e-12);
        assert!((back.translation - pose.translation).norm() < 1e-12);
    }

    #[test]
    fn contour_of_square() {
        let m = Mask::from_fn(8, 8, |x, y| (2..5).contains(&x) && (3..6).contains(&y));
        let c = outer_contour(&m).unwrap();
        assert!(c.is_closed());
        assert_eq!(c.len(), 8);
        assert!((c.length() - 8.0).abs() < 1e-12);
        assert_eq!(c.points()[0], Vec2::new(2.5, 3.5));
    }

    #[test]
    fn contour_of_disc_is_roughly_circular() {
        let m = Mask::from_fn(64, 64, |x, y| {
            let (dx, dy) = (x as f64 - 31.5, y as f64 - 31.5);
            dx * dx + dy * dy <= 400.0
        });
        let c = outer_contour(&m).unwrap();
        for p in c.points() {
            let r = (p - Vec2::new(32.0, 32.0)).norm();
            assert!((r - 20.0).abs() < 1.5, "{r}");
        }
        let expected = 2.0 * PI * 20.0;
        assert!((c.length() - expected).abs() < 0.15 * expected);
        assert!(outer_contour(&Mask::new(5, 5)).is_err());
    }
}
