//! Z-buffered flat rasterization of labeled meshes.
//!
//! Pixel `(x, y)` is sampled at its centre `(x + 0.5, y + 0.5)`. Lens distortion is not
//! applied; backface culling is disabled so open surfaces stay visible from both sides.

use crate::anatomy::{AnatomicalRegion, RegionHistogram};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec2, Vec3};
use crate::image::{GrayImage, Mask};

use super::mesh::LabeledMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub silhouette: Mask,
    /// Camera-space depth of the nearest surface, `+inf` where nothing was drawn.
    pub depth: Vec<f64>,
    pub region_map: Vec<Option<AnatomicalRegion>>,
}

impl RenderOutput {
    fn empty(width: usize, height: usize) -> Self {
        RenderOutput {
            width,
            height,
            silhouette: Mask::new(width, height),
            depth: vec![f64::INFINITY; width * height],
            region_map: vec![None; width * height],
        }
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    /// Intensity ramp over the visible surface: nearest point 1.0, farthest 0.7,
    /// background 0. Used both to synthesize frames and as the render's texture.
    pub fn shade(&self) -> GrayImage {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &d in self.depth.iter().filter(|d| d.is_finite()) {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let span = (hi - lo).max(1e-12);
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .depth
                .iter()
                .map(|&d| {
                    if d.is_finite() {
                        1.0 - 0.3 * (d - lo) / span
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}

fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Sutherland–Hodgman clip of a camera-space polygon against `z >= near`.
fn clip_near(poly: &[Vec3], near: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ina, inb) = (a.z >= near, b.z >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (near - a.z) / (b.z - a.z);
            out.push(a + (b - a) * s);
        }
    }
    out
}

struct Target<'a> {
    out: &'a mut RenderOutput,
    far: f64,
}

impl Target<'_> {
    fn raster_triangle(&mut self, pix: [Vec2; 3], depth: [f64; 3], region: AnatomicalRegion) {
        let area = edge(&pix[0], &pix[1], &pix[2]);
        if !(area.abs() > 1e-12) {
            return;
        }
        let (w, h) = (self.out.width as f64, self.out.height as f64);
        let min_x = pix.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = pix.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pix.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = pix.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
            return;
        }
        let x0 = (min_x - 0.5).floor().max(0.0) as usize;
        let y0 = (min_y - 0.5).floor().max(0.0) as usize;
        let x1 = ((max_x - 0.5).ceil().max(0.0) as usize).min(self.out.width - 1);
        let y1 = ((max_y - 0.5).ceil().max(0.0) as usize).min(self.out.height - 1);
        let inv_z = [1.0 / depth[0], 1.0 / depth[1], 1.0 / depth[2]];
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let b0 = edge(&pix[1], &pix[2], &p) / area;
                let b1 = edge(&pix[2], &pix[0], &p) / area;
                let b2 = edge(&pix[0], &pix[1], &p) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
                if z > self.far {
                    continue;
                }
                let idx = y * self.out.width + x;
                if z < self.out.depth[idx] {
                    self.out.depth[idx] = z;
                    self.out.region_map[idx] = Some(region);
                    self.out.silhouette.set(x, y, true);
                }
            }
        }
    }
}

pub fn render(mesh: &LabeledMesh, cam: &CameraModel, size: (usize, usize)) -> Result<RenderOutput> {
    let (width, height) = size;
    if width < 8 || height < 8 {
        return Err(Error::invalid("render size must be at least 8x8"));
    }
    cam.validate()?;
    let pose = cam.view_pose();
    let k = &cam.intrinsics;
    let near = cam.frustum.near;
    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.world_to_camera(v)).collect();
    let mut out = RenderOutput::empty(width, height);
    let mut target = Target {
        out: &mut out,
        far: cam.frustum.far,
    };
    for (face, &region) in mesh.faces.iter().zip(&mesh.face_region) {
        let tri = [cam_pts[face[0]], cam_pts[face[1]], cam_pts[face[2]]];
        let poly: Vec<Vec3> = if tri.iter().all(|p| p.z >= near) {
            tri.to_vec()
        } else if tri.iter().all(|p| p.z < near) {
            continue;
        } else {
            clip_near(&tri, near)
        };
        let pix: Vec<Vec2> = poly
            .iter()
            .map(|p| k.pixel_from_normalized(&Vec2::new(p.x / p.z, p.y / p.z)))
            .collect();
        for i in 1..poly.len().saturating_sub(1) {
            target.raster_triangle(
                [pix[0], pix[i], pix[i + 1]],
                [poly[0].z, poly[i].z, poly[i + 1].z],
                region,
            );
        }
    }
    Ok(out)
}

/// Projects the articular-margin polyline; vertices at non-positive depth are dropped
/// and the order of the remaining ones is preserved.
pub fn project_margin(mesh: &LabeledMesh, cam: &CameraModel) -> Result<Vec<Vec2>> {
    let pose = cam.view_pose();
    let pts: Vec<Vec2> = mesh
        .margin_polyline
        .iter()
        .filter_map(|&i| {
            let p = pose.world_to_camera(&mesh.vertices[i]);
            (p.z > 0.0).then(|| cam.intrinsics.pixel_from_normalized(&Vec2::new(p.x / p.z, p.y / p.z)))
        })
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyCurve);
    }
    Ok(pts)
}

pub fn visible_region_histogram(out: &RenderOutput) -> RegionHistogram {
    let mut h = RegionHistogram::default();
    for r in out.region_map.iter().flatten() {
        h.add(*r, 1);
    }
    h
}
