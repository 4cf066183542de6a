//! Synthetic condyle scene: a labeled ellipsoidal cap with an articular-margin curve,
//! plus the default camera used by the harness.

use std::f64::consts::PI;

use crate::anatomy::AnatomicalRegion;
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, CameraModel, DistortionCoefficients, Frustum, Pose, Vec3};
use crate::raster::{LabeledMesh, MeshLabels};

/// Shape of the synthetic cap `x²/a² + y²/b² + z²/c² = 1, z ≤ 0`, facing −z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapParams {
    pub semi_axes: [f64; 3],
    /// Polar rings from the apex to the rim.
    pub rings: usize,
    pub segments: usize,
    /// Ring carrying the margin curve and its azimuth span (radians, centred on +x).
    pub margin_ring: usize,
    pub margin_span: f64,
    /// Polar wobble amplitude of the margin ring (radians).
    pub wobble: f64,
}

impl Default for CapParams {
    fn default() -> Self {
        CapParams {
            semi_axes: [1.0, 0.85, 0.7],
            rings: 24,
            segments: 72,
            margin_ring: 13,
            margin_span: 200f64.to_radians(),
            wobble: 0.12,
        }
    }
}

fn region_for(polar: f64, azimuth: f64) -> AnatomicalRegion {
    if polar < 0.45 {
        return AnatomicalRegion::IntercondylarNotch;
    }
    let a = azimuth.rem_euclid(2.0 * PI);
    match (a / (PI / 2.0)) as usize {
        0 => AnatomicalRegion::LateralCondyle,
        1 => AnatomicalRegion::SupracondylarArea,
        2 => AnatomicalRegion::MedialCondyle,
        _ => AnatomicalRegion::PclOrigin,
    }
}

/// Builds the cap. Vertex 0 is the apex; ring `i` (1-based) sits at polar angle
/// `i/rings · π/2` from the −z axis, with the margin ring bent by a 3-lobed wobble.
pub fn synthetic_condyle(p: &CapParams) -> Result<(LabeledMesh, MeshLabels)> {
    let [a, b, c] = p.semi_axes;
    let (rings, segs) = (p.rings.max(2), p.segments.max(8));
    let polar_of = |ring: usize, az: f64| {
        let base = ring as f64 / rings as f64 * (PI / 2.0);
        if ring == p.margin_ring {
            base + p.wobble * (3.0 * az).sin()
        } else {
            base
        }
    };
    let point =
        |polar: f64, az: f64| Vec3::new(a * polar.sin() * az.cos(), b * polar.sin() * az.sin(), -c * polar.cos());
    let mut vertices = vec![point(0.0, 0.0)];
    for ring in 1..=rings {
        for s in 0..segs {
            let az = 2.0 * PI * s as f64 / segs as f64;
            vertices.push(point(polar_of(ring, az), az));
        }
    }
    let idx = |ring: usize, s: usize| 1 + (ring - 1) * segs + s % segs;
    let mut faces = Vec::new();
    let mut face_region = Vec::new();
    for s in 0..segs {
        let az = 2.0 * PI * (s as f64 + 0.5) / segs as f64;
        faces.push([0, idx(1, s), idx(1, s + 1)]);
        face_region.push(region_for(0.0, az));
    }
    for ring in 1..rings {
        let polar = (ring as f64 + 0.5) / rings as f64 * (PI / 2.0);
        for s in 0..segs {
            let az = 2.0 * PI * (s as f64 + 0.5) / segs as f64;
            let region = region_for(polar, az);
            faces.push([idx(ring, s), idx(ring + 1, s), idx(ring + 1, s + 1)]);
            faces.push([idx(ring, s), idx(ring + 1, s + 1), idx(ring, s + 1)]);
            face_region.push(region);
            face_region.push(region);
        }
    }
    let half = p.margin_span / 2.0;
    let mut along: Vec<(f64, usize)> = (0..segs)
        .map(|s| {
            let az = 2.0 * PI * s as f64 / segs as f64;
            (if az > PI { az - 2.0 * PI } else { az }, s)
        })
        .filter(|(az, _)| az.abs() <= half)
        .collect();
    along.sort_by(|x, y| x.0.total_cmp(&y.0));
    let margin_polyline: Vec<usize> = along.iter().map(|&(_, s)| idx(p.margin_ring, s)).collect();
    let mesh = LabeledMesh::new(vertices, faces, face_region, margin_polyline)?;
    let labels = MeshLabels {
        face_regions: mesh.face_region.clone(),
        margin_polyline: mesh.margin_polyline.clone(),
        blumensaat_length: Some(2.0 * a),
        height: Some(2.0 * b),
    };
    Ok((mesh, labels))
}

/// Pinhole camera for `size`, focal length scaled so a 256-px frame has `fx = 220`.
pub fn default_camera(size: (usize, usize), pose: Pose) -> CameraModel {
    let (w, h) = (size.0 as f64, size.1 as f64);
    let f = 220.0 * w / 256.0;
    CameraModel {
        intrinsics: CameraIntrinsics {
            fx: f,
            fy: f,
            cx: w / 2.0,
            cy: h / 2.0,
            skew: 0.0,
        },
        distortion: DistortionCoefficients::from_array([0.0; 5]),
        frustum: Frustum {
            near: 0.05,
            far: 50.0,
            fov: 2.0 * (h / (2.0 * f)).atan(),
            aspect: w / h,
        },
        alpha: 0.0,
        pose,
    }
}

/// Up hint shared by synthetic poses: image rows grow along world −y.
pub fn world_up() -> Vec3 {
    Vec3::new(0.0, -1.0, 0.0)
}
