use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomicalRegion;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Triangle mesh with one anatomical label per face and an ordered articular-margin polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_region: Vec<AnatomicalRegion>,
    pub margin_polyline: Vec<usize>,
}

/// Sidecar labels file next to an OBJ mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshLabels {
    pub face_regions: Vec<AnatomicalRegion>,
    pub margin_polyline: Vec<usize>,
    /// Blumensaat-line length in model units (grid scale along x).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blumensaat_length: Option<f64>,
    /// Grid height perpendicular to the Blumensaat line, model units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

impl LabeledMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        face_region: Vec<AnatomicalRegion>,
        margin_polyline: Vec<usize>,
    ) -> Result<Self> {
        let mesh = LabeledMesh {
            vertices,
            faces,
            face_region,
            margin_polyline,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((i, f)) = self.faces.iter().enumerate().find(|(_, f)| f.iter().any(|&v| v >= n)) {
            return Err(Error::invalid(format!(
                "face {i} {f:?} references a vertex out of range (n={n})"
            )));
        }
        if self.face_region.len() != self.faces.len() {
            return Err(Error::invalid(format!(
                "{} faces but {} region labels",
                self.faces.len(),
                self.face_region.len()
            )));
        }
        if self.margin_polyline.len() < 3 {
            return Err(Error::invalid("margin polyline needs at least 3 vertices"));
        }
        if self.margin_polyline.iter().any(|&v| v >= n) {
            return Err(Error::invalid("margin polyline references a vertex out of range"));
        }
        if self.vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("mesh vertices must be finite"));
        }
        Ok(())
    }

    pub fn margin_points(&self) -> Vec<Vec3> {
        self.margin_polyline.iter().map(|&i| self.vertices[i]).collect()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn labels(&self) -> MeshLabels {
        MeshLabels {
            face_regions: self.face_region.clone(),
            margin_polyline: self.margin_polyline.clone(),
            blumensaat_length: None,
            height: None,
        }
    }

    /// Parses the OBJ subset used here: `v x y z` and triangular `f i j k` with 1-based
    /// indices. Texture/normal suffixes (`i/t/n`) are accepted and ignored.
    pub fn parse_obj(text: &str) -> std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                    if c.len() != 3 {
                        return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|s| {
                            s.split('/')
                                .next()
                                .unwrap_or("")
                                .parse::<usize>()
                                .map_err(|e| format!("line {}: {e}", lineno + 1))
                        })
                        .collect::<std::result::Result<_, _>>()?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(format!(
                            "line {}: faces must be triangles with 1-based indices",
                            lineno + 1
                        ));
                    }
                    faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        Ok((vertices, faces))
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }

    pub fn load(obj_path: &Path, labels_path: &Path) -> Result<(Self, MeshLabels)> {
        let text = std::fs::read_to_string(obj_path).map_err(|e| Error::io(obj_path, e))?;
        let (vertices, faces) = Self::parse_obj(&text).map_err(|m| Error::parse(obj_path, m))?;
        let labels_text = std::fs::read_to_string(labels_path).map_err(|e| Error::io(labels_path, e))?;
        let labels: MeshLabels =
            serde_json::from_str(&labels_text).map_err(|e| Error::parse(labels_path, e.to_string()))?;
        let mesh = LabeledMesh::new(
            vertices,
            faces,
            labels.face_regions.clone(),
            labels.margin_polyline.clone(),
        )?;
        Ok((mesh, labels))
    }

    pub fn save(&self, obj_path: &Path, labels_path: &Path, labels: &MeshLabels) -> Result<()> {
        std::fs::write(obj_path, self.to_obj()).map_err(|e| Error::io(obj_path, e))?;
        let json = serde_json::to_string_pretty(labels).expect("labels serialize");
        std::fs::write(labels_path, json).map_err(|e| Error::io(labels_path, e))
    }
}
