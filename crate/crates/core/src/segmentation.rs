//! First-frame foreground segmentation: HSV dual thresholding, largest 8-connected
//! component, moment centroid, prompt-driven refinement and IoU-based mask selection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Per-pixel `(hue degrees in [0, 360), saturation, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

pub fn rgb_to_hsv_pixel(p: [u8; 3]) -> [f64; 3] {
    let r = p[0] as f64 / 255.0;
    let g = p[1] as f64 / 255.0;
    let b = p[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h % 360.0, s, max]
}

pub fn rgb_to_hsv(img: &Image) -> HsvImage {
    HsvImage {
        width: img.width(),
        height: img.height(),
        data: img.pixels().iter().map(|&p| rgb_to_hsv_pixel(p)).collect(),
    }
}

/// Closed intervals for each HSV channel. A hue interval with `lo > hi` wraps through 0°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholds {
    pub h: [f64; 2],
    pub s: [f64; 2],
    pub v: [f64; 2],
}

impl Default for HsvThresholds {
    /// Whitish, bright, low-saturation tissue.
    fn default() -> Self {
        HsvThresholds {
            h: [0.0, 360.0],
            s: [0.0, 0.35],
            v: [0.6, 1.0],
        }
    }
}

impl HsvThresholds {
    pub fn full() -> Self {
        HsvThresholds {
            h: [0.0, 360.0],
            s: [0.0, 1.0],
            v: [0.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s[0] > self.s[1] || self.v[0] > self.v[1] {
            return Err(Error::invalid("saturation/value thresholds need lo <= hi"));
        }
        if self.h.iter().chain(&self.s).chain(&self.v).any(|v| !v.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        Ok(())
    }

    pub fn contains(&self, hsv: [f64; 3]) -> bool {
        let [h, s, v] = hsv;
        let hue_ok = if self.h[0] <= self.h[1] {
            self.h[0] <= h && h <= self.h[1]
        } else {
            h >= self.h[0] || h <= self.h[1]
        };
        hue_ok && self.s[0] <= s && s <= self.s[1] && self.v[0] <= v && v <= self.v[1]
    }
}

pub fn threshold_hsv(hsv: &HsvImage, th: &HsvThresholds) -> Mask {
    Mask::from_bits(
        hsv.width,
        hsv.height,
        hsv.data.iter().map(|&p| th.contains(p)).collect(),
    )
    .expect("dimensions preserved")
}

/// 8-connected component labels (0 = background, components numbered from 1 in
/// row-major discovery order) and per-component areas.
pub fn label_components(m: &Mask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (m.width(), m.height());
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !m.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        let mut area = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits()[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    (labels, areas)
}

/// Largest 8-connected component. Ties go to the component whose first pixel in
/// row-major order comes first. Empty input gives an empty mask.
pub fn largest_component(m: &Mask) -> Mask {
    let (labels, areas) = label_components(m);
    let mut best: Option<(u32, usize)> = None;
    for (i, &a) in areas.iter().enumerate() {
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i as u32 + 1, a));
        }
    }
    match best {
        None => Mask::new(m.width(), m.height()),
        Some((label, _)) => Mask::from_bits(m.width(), m.height(), labels.iter().map(|&l| l == label).collect())
            .expect("dimensions preserved"),
    }
}

/// Spatial-moment centroid `(m10 / m00, m01 / m00)` in pixel-index coordinates.
pub fn centroid(region: &Mask) -> Result<(f64, f64)> {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for y in 0..region.height() {
        for x in 0..region.width() {
            if region.get(x, y) {
                m00 += 1.0;
                m10 += x as f64;
                m01 += y as f64;
            }
        }
    }
    if m00 == 0.0 {
        return Err(Error::invalid("centroid of an empty region"));
    }
    Ok((m10 / m00, m01 / m00))
}

/// Intersection over union; two empty masks score 0.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "mask size mismatch: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Index of the candidate with the highest IoU against `reference`; ties keep the lowest index.
pub fn select_best_mask(candidates: &[Mask], reference: &Mask) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate masks to select from"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let score = iou(c, reference)?;
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(best.0)
}

/// Prompt-driven mask proposal: given the image and a normalized prompt point
/// `(c_x / W, c_y / H)`, returns one or more candidate masks of the image's size.
pub trait RefinementOracle: Send + Sync {
    fn propose(&self, img: &Image, prompt: (f64, f64)) -> Result<Vec<Mask>>;
}

/// Reference proposer: seeded 8-connected region growing on the HSV value channel from
/// the prompt pixel, one candidate per tolerance level.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrowingOracle {
    pub tolerances: Vec<f64>,
}

impl Default for RegionGrowingOracle {
    fn default() -> Self {
        RegionGrowingOracle {
            tolerances: vec![0.08, 0.16, 0.3],
        }
    }
}

impl RefinementOracle for RegionGrowingOracle {
    fn propose(&self, img: &Image, prompt: (f64, f64)) -> Result<Vec<Mask>> {
        if self.tolerances.is_empty() {
            return Err(Error::Oracle("region growing needs at least one tolerance".into()));
        }
        let (w, h) = (img.width(), img.height());
        let sx = ((prompt.0 * w as f64).floor().max(0.0) as usize).min(w - 1);
        let sy = ((prompt.1 * h as f64).floor().max(0.0) as usize).min(h - 1);
        let value: Vec<f64> = rgb_to_hsv(img).data.iter().map(|p| p[2]).collect();
        let seed_v = value[sy * w + sx];
        Ok(self
            .tolerances
            .iter()
            .map(|&tol| {
                let accept = Mask::from_bits(w, h, value.iter().map(|&v| (v - seed_v).abs() <= tol).collect())
                    .expect("dimensions preserved");
                flood_from(&accept, sx, sy)
            })
            .collect())
    }
}

/// Returns its reference mask unchanged: the thresholded mask recomputed from the image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityOracle {
    pub thresholds: HsvThresholds,
}

impl RefinementOracle for IdentityOracle {
    fn propose(&self, img: &Image, _prompt: (f64, f64)) -> Result<Vec<Mask>> {
        Ok(vec![threshold_hsv(&rgb_to_hsv(img), &self.thresholds)])
    }
}

/// Connected part of `allowed` containing `(x, y)`; empty if the seed is not allowed.
pub fn flood_from(allowed: &Mask, x: usize, y: usize) -> Mask {
    let (w, h) = (allowed.width(), allowed.height());
    let mut out = Mask::new(w, h);
    if !allowed.get(x, y) {
        return out;
    }
    let mut queue = VecDeque::from([(x, y)]);
    out.set(x, y, true);
    while let Some((cx, cy)) = queue.pop_front() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if allowed.get(nx, ny) && !out.get(nx, ny) {
                    out.set(nx, ny, true);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Selected mask `M*`.
    pub mask: Mask,
    /// Thresholded reference mask `M_cart`.
    pub reference: Mask,
    /// Largest component of the reference.
    pub component: Mask,
    pub centroid: (f64, f64),
    pub candidates: usize,
    pub selected: usize,
}

pub fn segment_first_frame(img: &Image, th: &HsvThresholds, oracle: &dyn RefinementOracle) -> Result<Segmentation> {
    th.validate()?;
    let hsv = rgb_to_hsv(img);
    let reference = threshold_hsv(&hsv, th);
    if reference.is_empty() {
        return Err(Error::NoForeground);
    }
    let component = largest_component(&reference);
    let (cx, cy) = centroid(&component)?;
    let prompt = (cx / img.width() as f64, cy / img.height() as f64);
    let candidates = oracle
        .propose(img, prompt)
        .map_err(|e| Error::Oracle(format!("proposal at prompt {prompt:?} failed: {e}")))?;
    if candidates.is_empty() {
        return Err(Error::Oracle("oracle returned no candidates".into()));
    }
    if candidates
        .iter()
        .any(|c| c.width() != img.width() || c.height() != img.height())
    {
        return Err(Error::Oracle("oracle candidate size differs from the image".into()));
    }
    let selected = select_best_mask(&candidates, &reference)?;
    Ok(Segmentation {
        mask: candidates[selected].clone(),
        reference,
        component,
        centroid: (cx, cy),
        candidates: candidates.len(),
        selected,
    })
}
