//! Scripted synthetic sequences: camera trajectory, phase schedule and degradations,
//! rendered deterministically frame by frame.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{default_camera, synthetic_condyle, world_up, CapParams};
use crate::anatomy::{AnatomicalRegion, RegionHistogram};
use crate::error::{Error, Result};
use crate::geometry::{exp_so3, CameraModel, Pose, Vec3};
use crate::image::{Image, Mask};
use crate::memory::{SurgicalPhase, Viewpoint};
use crate::raster::{render, visible_region_histogram, LabeledMesh, MeshLabels};
use crate::registration::PoseRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKnot {
    pub frame: usize,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default)]
    pub roll_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMark {
    pub frame: usize,
    pub phase: SurgicalPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegradationSpec {
    /// Gray rectangle covering `fraction` of the truth bounding box (see [`occluder_rect`]).
    Occluder {
        fraction: f64,
        #[serde(default = "default_occluder_gray")]
        gray: u8,
    },
    /// Normalized box filter of width `2·half_width + 1`.
    Blur { half_width: usize },
    /// Saturated white discs at seeded positions inside the truth bounding box.
    Specular { count: usize, radius: f64 },
    /// Per-pixel gain; with `gain_end`, ramps linearly over the event's frame range.
    Illumination {
        gain: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain_end: Option<f64>,
    },
}

fn default_occluder_gray() -> u8 {
    128
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DegradationSpec::Occluder { fraction, .. } => (0.0..=1.0).contains(&fraction),
            DegradationSpec::Blur { half_width } => half_width <= 32,
            DegradationSpec::Specular { count, radius } => count <= 64 && radius > 0.0 && radius <= 64.0,
            DegradationSpec::Illumination { gain, gain_end } => {
                (0.0..=4.0).contains(&gain) && gain_end.is_none_or(|g| (0.0..=4.0).contains(&g))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degradation parameters out of range: {self:?}")))
        }
    }
}

/// A degradation active on frames `start..=end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationEvent {
    pub start: usize,
    pub end: usize,
    pub spec: DegradationSpec,
}

impl DegradationEvent {
    pub fn active(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    /// The spec at frame `t`, with an illumination ramp resolved to a single gain.
    pub fn spec_at(&self, t: usize) -> DegradationSpec {
        match self.spec {
            DegradationSpec::Illumination {
                gain,
                gain_end: Some(end),
            } => {
                let span = (self.end - self.start).max(1) as f64;
                let u = (t.saturating_sub(self.start) as f64 / span).clamp(0.0, 1.0);
                DegradationSpec::Illumination {
                    gain: gain + (end - gain) * u,
                    gain_end: None,
                }
            }
            ref s => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSource {
    pub obj: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScript {
    /// OBJ + labels; the built-in synthetic condyle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSource>,
    pub resolution: [usize; 2],
    pub frames: usize,
    pub seed: u64,
    pub trajectory: Vec<TrajectoryKnot>,
    pub phases: Vec<PhaseMark>,
    #[serde(default)]
    pub degradations: Vec<DegradationEvent>,
}

impl SequenceScript {
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.resolution;
        if w < 16 || h < 16 {
            return Err(Error::invalid("resolution must be at least 16x16"));
        }
        if self.frames == 0 {
            return Err(Error::invalid("a sequence needs at least one frame"));
        }
        let increasing = |f: &[usize]| f.windows(2).all(|p| p[0] < p[1]);
        let knots: Vec<usize> = self.trajectory.iter().map(|k| k.frame).collect();
        if knots.first() != Some(&0) || !increasing(&knots) {
            return Err(Error::invalid(
                "trajectory knots must start at frame 0 and strictly increase",
            ));
        }
        let marks: Vec<usize> = self.phases.iter().map(|p| p.frame).collect();
        if marks.first() != Some(&0) || !increasing(&marks) {
            return Err(Error::invalid(
                "phase marks must start at frame 0 and strictly increase",
            ));
        }
        for k in &self.trajectory {
            if k.eye
                .iter()
                .chain(&k.target)
                .chain([&k.roll_deg])
                .any(|v| !v.is_finite())
            {
                return Err(Error::invalid(format!("knot at frame {} is not finite", k.frame)));
            }
        }
        for d in &self.degradations {
            if d.start > d.end || d.end >= self.frames {
                return Err(Error::invalid(format!(
                    "degradation range {}..={} is outside the sequence",
                    d.start, d.end
                )));
            }
            d.spec.validate()?;
        }
        Ok(())
    }

    /// Reads a script; relative mesh paths resolve against the script's directory.
    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: SequenceScript = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if let (Some(m), Some(dir)) = (s.mesh.as_mut(), path.parent()) {
            m.obj = dir.join(&m.obj);
            m.labels = dir.join(&m.labels);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn phase_at(&self, t: usize) -> SurgicalPhase {
        self.phases
            .iter()
            .take_while(|p| p.frame <= t)
            .last()
            .map_or(SurgicalPhase::Exploration, |p| p.phase)
    }

    /// Camera pose at frame `t`: Catmull–Rom through the knots (ends clamped), then
    /// `look_at` with the interpolated roll about the optical axis.
    pub fn pose_at(&self, t: usize) -> Result<Pose> {
        let k = &self.trajectory;
        let i = k.iter().rposition(|k| k.frame <= t).unwrap_or(0);
        let (eye, target, roll) = if i + 1 >= k.len() {
            (Vec3::from(k[i].eye), Vec3::from(k[i].target), k[i].roll_deg)
        } else {
            let u = (t - k[i].frame) as f64 / (k[i + 1].frame - k[i].frame) as f64;
            let idx = |j: isize| k[j.clamp(0, k.len() as isize - 1) as usize].clone();
            let (p0, p1, p2, p3) = (
                idx(i as isize - 1),
                idx(i as isize),
                idx(i as isize + 1),
                idx(i as isize + 2),
            );
            let cr = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b
                    + (c - a) * u
                    + (2.0 * a - 5.0 * b + 4.0 * c - d) * u * u
                    + (3.0 * b - a - 3.0 * c + d) * u * u * u)
            };
            let v = |f: fn(&TrajectoryKnot) -> [f64; 3]| {
                let (a, b, c, d) = (f(&p0), f(&p1), f(&p2), f(&p3));
                Vec3::new(
                    cr(a[0], b[0], c[0], d[0]),
                    cr(a[1], b[1], c[1], d[1]),
                    cr(a[2], b[2], c[2], d[2]),
                )
            };
            (
                v(|k| k.eye),
                v(|k| k.target),
                cr(p0.roll_deg, p1.roll_deg, p2.roll_deg, p3.roll_deg),
            )
        };
        let base = Pose::look_at(&eye, &target, &world_up())?;
        Pose::new(
            exp_so3(&Vec3::new(0.0, 0.0, roll.to_radians())) * base.rotation,
            base.translation,
        )
    }
}

/// Viewpoint of a camera centre relative to the condyle at the origin.
pub fn viewpoint_of(center: &Vec3) -> Result<Viewpoint> {
    let d = center.norm();
    if !(d > 0.0) {
        return Err(Error::invalid("camera centre coincides with the condyle origin"));
    }
    Viewpoint::new(center.x.atan2(-center.z), (center.y / d).clamp(-1.0, 1.0).asin(), d)
}

/// Ground truth written per frame (one JSON line each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub t: usize,
    pub phase: SurgicalPhase,
    pub viewpoint: Viewpoint,
    pub pose: PoseRecord,
    pub region_histogram: RegionHistogram,
    /// Dominant visible region; `None` when the condyle is out of view.
    pub region: Option<AnatomicalRegion>,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub image: Image,
    pub mask: Mask,
    pub truth: FrameTruth,
}

/// Overwrites pixels with `f` over an axis-aligned rectangle (inclusive corners).
fn fill_rect(img: &mut Image, x0: usize, y0: usize, x1: usize, y1: usize, rgb: [u8; 3]) {
    for y in y0..=y1.min(img.height() - 1) {
        for x in x0..=x1.min(img.width() - 1) {
            img.set(x, y, rgb);
        }
    }
}

/// Occluder rectangle `(x0, y0, x1, y1)` for a truth mask, or `None` when nothing is covered:
/// a full-height strip flush with the box's right edge or a full-width strip along its
/// bottom, whichever covers a share closer to `fraction`.
pub fn occluder_rect(truth: &Mask, fraction: f64) -> Option<(usize, usize, usize, usize)> {
    let (x0, y0, x1, y1) = truth.bounding_box()?;
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let w = (fraction * bw as f64).round() as usize;
    let h = (fraction * bh as f64).round() as usize;
    let err_w = (w as f64 / bw as f64 - fraction).abs();
    let err_h = (h as f64 / bh as f64 - fraction).abs();
    if err_w <= err_h {
        (w > 0).then(|| (x1 + 1 - w, y0, x1, y1))
    } else {
        (h > 0).then(|| (x0, y1 + 1 - h, x1, y1))
    }
}

fn box_blur(img: &Image, k: usize) -> Image {
    if k == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let pass = |src: &[[u32; 3]], horizontal: bool| -> Vec<[u32; 3]> {
        let mut out = vec![[0u32; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let (lo, hi, fixed) = if horizontal {
                    (x.saturating_sub(k), (x + k).min(w - 1), y)
                } else {
                    (y.saturating_sub(k), (y + k).min(h - 1), x)
                };
                let mut acc = [0u32; 3];
                for s in lo..=hi {
                    let p = if horizontal {
                        src[fixed * w + s]
                    } else {
                        src[s * w + fixed]
                    };
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
                let n = (hi - lo + 1) as u32;
                // rounded division keeps the two passes symmetric
                out[y * w + x] = acc.map(|v| (v + n / 2) / n);
            }
        }
        out
    };
    let src: Vec<[u32; 3]> = img.pixels().iter().map(|p| p.map(u32::from)).collect();
    let out = pass(&pass(&src, true), false);
    Image::new(w, h, out.iter().map(|p| p.map(|v| v.min(255) as u8)).collect()).expect("same size")
}

/// Applies one degradation. Randomness (specular positions) is drawn from `(seed, t)`.
pub fn apply_degradation(frame: &Image, spec: &DegradationSpec, truth: &Mask, seed: u64, t: usize) -> Image {
    match *spec {
        DegradationSpec::Occluder { fraction, gray } => {
            let mut out = frame.clone();
            if let Some((x0, y0, x1, y1)) = occluder_rect(truth, fraction) {
                fill_rect(&mut out, x0, y0, x1, y1, [gray; 3]);
            }
            out
        }
        DegradationSpec::Blur { half_width } => box_blur(frame, half_width),
        DegradationSpec::Specular { count, radius } => {
            let mut out = frame.clone();
            let (x0, y0, x1, y1) = truth
                .bounding_box()
                .unwrap_or((0, 0, frame.width() - 1, frame.height() - 1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5bec);
            for _ in 0..count {
                let cx = rng.gen_range(x0 as f64..=x1 as f64 + 1.0);
                let cy = rng.gen_range(y0 as f64..=y1 as f64 + 1.0);
                for y in 0..frame.height() {
                    for x in 0..frame.width() {
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        if dx * dx + dy * dy <= radius * radius {
                            out.set(x, y, [255, 255, 255]);
                        }
                    }
                }
            }
            out
        }
        DegradationSpec::Illumination { gain, .. } => {
            if gain == 1.0 {
                return frame.clone();
            }
            let mut out = frame.clone();
            for p in out.pixels_mut() {
                *p = p.map(|v| (gain * v as f64).round().clamp(0.0, 255.0) as u8);
            }
            out
        }
    }
}

/// Renders frames of a script on demand; every frame depends only on the script and `t`.
pub struct SequenceGenerator {
    pub script: SequenceScript,
    pub mesh: LabeledMesh,
    pub labels: MeshLabels,
    background: Vec<[f64; 3]>,
}

const BONE: [f64; 3] = [236.0, 228.0, 214.0];
const GRAIN: f64 = 7.0;
const NOISE_CELL: usize = 16;

impl SequenceGenerator {
    pub fn new(script: SequenceScript) -> Result<Self> {
        script.validate()?;
        let (mesh, labels) = match &script.mesh {
            Some(m) => LabeledMesh::load(&m.obj, &m.labels)?,
            None => synthetic_condyle(&CapParams::default())?,
        };
        let [w, h] = script.resolution;
        // value noise on a coarse lattice, bilinearly interpolated; dark reddish tissue
        let (gw, gh) = (w / NOISE_CELL + 2, h / NOISE_CELL + 2);
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed ^ 0xbac6);
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
        let background = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 / NOISE_CELL as f64, (i / w) as f64 / NOISE_CELL as f64);
                let (xi, yi) = (x.floor() as usize, y.floor() as usize);
                let (fx, fy) = (x - xi as f64, y - yi as f64);
                let l = |a: usize, b: usize| lattice[b * gw + a];
                let n = l(xi, yi) * (1.0 - fx) * (1.0 - fy)
                    + l(xi + 1, yi) * fx * (1.0 - fy)
                    + l(xi, yi + 1) * (1.0 - fx) * fy
                    + l(xi + 1, yi + 1) * fx * fy;
                [75.0 + 45.0 * n, 28.0 + 14.0 * n, 24.0 + 10.0 * n]
            })
            .collect();
        Ok(SequenceGenerator {
            script,
            mesh,
            labels,
            background,
        })
    }

    pub fn len(&self) -> usize {
        self.script.frames
    }

    pub fn is_empty(&self) -> bool {
        self.script.frames == 0
    }

    pub fn size(&self) -> (usize, usize) {
        (self.script.resolution[0], self.script.resolution[1])
    }

    pub fn camera_at(&self, t: usize) -> Result<CameraModel> {
        Ok(default_camera(self.size(), self.script.pose_at(t)?))
    }

    /// Render, shade, composite over the background with per-frame grain, then apply the
    /// active degradations in script order.
    pub fn frame(&self, t: usize) -> Result<SyntheticFrame> {
        if t >= self.len() {
            return Err(Error::invalid(format!(
                "frame {t} is past the end of a {}-frame sequence",
                self.len()
            )));
        }
        let (w, h) = self.size();
        let cam = self.camera_at(t)?;
        let out = render(&self.mesh, &cam, (w, h))?;
        let shade = out.shade();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.script
                .seed
                .wrapping_add((t as u64).wrapping_mul(0x2545_F491_4F6C_DD1D)),
        );
        let px = (0..w * h)
            .map(|i| {
                let g = rng.gen_range(-GRAIN..=GRAIN);
                let base = if out.silhouette.bits()[i] {
                    BONE.map(|c| c * shade.data[i])
                } else {
                    self.background[i]
                };
                base.map(|c| (c + g).round().clamp(0.0, 255.0) as u8)
            })
            .collect();
        let mut image = Image::new(w, h, px)?;
        for ev in self.script.degradations.iter().filter(|e| e.active(t)) {
            image = apply_degradation(&image, &ev.spec_at(t), &out.silhouette, self.script.seed, t);
        }
        let hist = visible_region_histogram(&out);
        let truth = FrameTruth {
            t,
            phase: self.script.phase_at(t),
            viewpoint: viewpoint_of(&cam.pose.center())?,
            pose: PoseRecord::from(&cam.pose),
            region_histogram: hist,
            region: hist.dominant(),
            area: out.silhouette.area(),
        };
        Ok(SyntheticFrame {
            image,
            mask: out.silhouette,
            truth,
        })
    }
}

/// `sequence.json` in a generated directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub script: SequenceScript,
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("frames").join(format!("{t:06}.ppm"))
}

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("masks").join(format!("{t:06}.pgm"))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes `frames/NNNNNN.ppm`, `masks/NNNNNN.pgm`, `truth.jsonl` and `sequence.json`.
/// Frames render in parallel; the output is identical whatever the thread count.
pub fn generate_sequence(script: &SequenceScript, outdir: &Path) -> Result<SequenceManifest> {
    let gen = SequenceGenerator::new(script.clone())?;
    create_dir(&outdir.join("frames"))?;
    create_dir(&outdir.join("masks"))?;
    let truths: Vec<FrameTruth> = (0..gen.len())
        .into_par_iter()
        .map(|t| {
            let f = gen.frame(t)?;
            f.image.write_ppm(&frame_path(outdir, t))?;
            f.mask.write_pgm(&mask_path(outdir, t))?;
            Ok(f.truth)
        })
        .collect::<Result<_>>()?;
    let truth_path = outdir.join("truth.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?);
    for t in &truths {
        let line = serde_json::to_string(t).expect("truth records serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(&truth_path, e))?;
    }
    file.flush().map_err(|e| Error::io(&truth_path, e))?;
    let manifest = SequenceManifest {
        version: 1,
        width: script.resolution[0],
        height: script.resolution[1],
        frames: script.frames,
        seed: script.seed,
        script: script.clone(),
    };
    let mpath = outdir.join("sequence.json");
    std::fs::write(
        &mpath,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

pub fn read_truth(path: &Path) -> Result<Vec<FrameTruth>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// A generated sequence directory opened for reading.
#[derive(Debug, Clone)]
pub struct SequenceDir {
    pub dir: PathBuf,
    pub manifest: SequenceManifest,
    pub truth: Vec<FrameTruth>,
}

impl SequenceDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join("sequence.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: SequenceManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.to_string()))?;
        let truth = read_truth(&dir.join("truth.jsonl"))?;
        if truth.len() != manifest.frames {
            return Err(Error::invalid(format!(
                "{}: {} truth records for {} frames",
                dir.display(),
                truth.len(),
                manifest.frames
            )));
        }
        Ok(SequenceDir {
            dir: dir.to_path_buf(),
            manifest,
            truth,
        })
    }

    pub fn frame(&self, t: usize) -> Result<Image> {
        Image::read_ppm(&frame_path(&self.dir, t))
    }

    pub fn mask(&self, t: usize) -> Result<Mask> {
        Mask::read_pgm(&mask_path(&self.dir, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_script(frames: usize) -> SequenceScript {
        SequenceScript {
            mesh: None,
            resolution: [64, 64],
            frames,
            seed: 5,
            trajectory: vec![TrajectoryKnot {
                frame: 0,
                eye: [0.0, 0.0, -3.0],
                target: [0.0; 3],
                roll_deg: 0.0,
            }],
            phases: vec![PhaseMark {
                frame: 0,
                phase: SurgicalPhase::Exploration,
            }],
            degradations: vec![],
        }
    }

    #[test]
    fn static_trajectory_repeats_frames_up_to_grain() {
        let gen = SequenceGenerator::new(static_script(3)).unwrap();
        let (a, b) = (gen.frame(0).unwrap(), gen.frame(2).unwrap());
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.truth.viewpoint, b.truth.viewpoint);
        let diff = a
            .image
            .pixels()
            .iter()
            .zip(b.image.pixels())
            .map(|(p, q)| (p[0] as i32 - q[0] as i32).abs())
            .max()
            .unwrap();
        assert!(diff <= 2 * GRAIN as i32 + 1);
        assert_eq!(
            gen.frame(1).unwrap(),
            SequenceGenerator::new(static_script(3)).unwrap().frame(1).unwrap()
        );
    }

    #[test]
    fn viewpoint_of_the_default_eye() {
        let v = viewpoint_of(&Vec3::new(0.0, 0.0, -3.0)).unwrap();
        assert_eq!((v.theta, v.phi, v.d), (0.0, 0.0, 3.0));
        let v = viewpoint_of(&Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert!((v.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn degradation_identities_and_occluder_fraction() {
        let gen = SequenceGenerator::new(static_script(1)).unwrap();
        let f = gen.frame(0).unwrap();
        let same = |s: DegradationSpec| apply_degradation(&f.image, &s, &f.mask, 1, 0);
        assert_eq!(
            same(DegradationSpec::Illumination {
                gain: 1.0,
                gain_end: None
            }),
            f.image
        );
        assert_eq!(same(DegradationSpec::Blur { half_width: 0 }), f.image);
        let (x0, y0, x1, y1) = f.mask.bounding_box().unwrap();
        let bbox = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
        let occ = same(DegradationSpec::Occluder {
            fraction: 0.25,
            gray: 128,
        });
        let changed: Vec<usize> = (0..64 * 64)
            .filter(|&i| occ.pixels()[i] != f.image.pixels()[i])
            .collect();
        let (rx0, ry0, rx1, ry1) = occluder_rect(&f.mask, 0.25).unwrap();
        let rect = ((rx1 - rx0 + 1) * (ry1 - ry0 + 1)) as f64;
        assert!((0.24..=0.26).contains(&(rect / bbox)), "{}", rect / bbox);
        assert!(changed
            .iter()
            .all(|&i| (rx0..=rx1).contains(&(i % 64)) && (ry0..=ry1).contains(&(i / 64))));
    }

    #[test]
    fn illumination_ramp_interpolates() {
        let ev = DegradationEvent {
            start: 10,
            end: 20,
            spec: DegradationSpec::Illumination {
                gain: 1.0,
                gain_end: Some(0.5),
            },
        };
        assert_eq!(
            ev.spec_at(15),
            DegradationSpec::Illumination {
                gain: 0.75,
                gain_end: None
            }
        );
        let img = Image::filled(4, 4, [200, 100, 3]);
        let out = apply_degradation(
            &img,
            &DegradationSpec::Illumination {
                gain: 1.5,
                gain_end: None,
            },
            &Mask::new(4, 4),
            0,
            0,
        );
        assert_eq!(out.get(0, 0), [255, 150, 5]);
    }

    #[test]
    fn script_validation() {
        let mut s = static_script(4);
        s.degradations.push(DegradationEvent {
            start: 2,
            end: 9,
            spec: DegradationSpec::Blur { half_width: 1 },
        });
        assert!(s.validate().is_err());
        let mut s = static_script(4);
        s.trajectory[0].frame = 1;
        assert!(s.validate().is_err());
    }
}
