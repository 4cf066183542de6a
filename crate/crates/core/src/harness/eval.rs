//! Per-frame mask metrics and their aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::segmentation::{centroid, iou};

/// Frames with IoU below this count as tracking failures.
pub const FAILURE_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub t: usize,
    pub iou: f64,
    /// `None` when either mask is empty.
    pub centroid_error: Option<f64>,
    /// Symmetric mean boundary distance; `None` when exactly one mask is empty.
    pub boundary_distance: Option<f64>,
    pub failure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Frames contributing (those where the metric is defined).
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Aggregate::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Aggregate {
            mean,
            std: var.sqrt(),
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub iou: Aggregate,
    pub centroid_error: Aggregate,
    pub boundary_distance: Aggregate,
    pub failure_rate: f64,
    /// Largest working / long-term store sizes seen while tracking, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_working: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_longterm: Option<usize>,
    pub per_frame: Vec<FrameMetrics>,
}

impl EvalReport {
    /// Recomputes the aggregates from `per_frame`.
    pub fn from_frames(per_frame: Vec<FrameMetrics>) -> Self {
        let n = per_frame.len();
        EvalReport {
            frames: n,
            iou: Aggregate::of(per_frame.iter().map(|f| f.iou)),
            centroid_error: Aggregate::of(per_frame.iter().filter_map(|f| f.centroid_error)),
            boundary_distance: Aggregate::of(per_frame.iter().filter_map(|f| f.boundary_distance)),
            failure_rate: if n == 0 {
                0.0
            } else {
                per_frame.iter().filter(|f| f.failure).count() as f64 / n as f64
            },
            peak_working: None,
            peak_longterm: None,
            per_frame,
        }
    }

    /// Aggregates restricted to frames `range` (inclusive bounds).
    pub fn window(&self, start: usize, end: usize) -> EvalReport {
        EvalReport::from_frames(
            self.per_frame
                .iter()
                .filter(|f| (start..=end).contains(&f.t))
                .cloned()
                .collect(),
        )
    }

    /// Share of frames with IoU at least `threshold`.
    pub fn share_with_iou_at_least(&self, threshold: f64) -> f64 {
        if self.frames == 0 {
            return 0.0;
        }
        self.per_frame.iter().filter(|f| f.iou >= threshold).count() as f64 / self.frames as f64
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut s = String::from("t,iou,centroid_error,boundary_distance,failure\n");
        for f in &self.per_frame {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                f.t,
                f.iou,
                opt(f.centroid_error),
                opt(f.boundary_distance),
                f.failure as u8
            ));
        }
        s
    }
}

/// Squared 1-D distance transform (lower envelope of parabolas rooted at finite sites).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut sites = f.iter().enumerate().filter(|(_, x)| x.is_finite()).map(|(i, _)| i);
    let Some(first) = sites.next() else {
        out.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in sites {
        let s = loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            // z[0] = −∞ stops the pop before k underflows
            if s <= z[k] {
                k -= 1;
            } else {
                break s;
            }
        };
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance to the nearest `true` cell.
fn squared_edt(features: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut g: Vec<f64> = features.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let n = w.max(h);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    let (mut col, mut out) = (vec![0.0; h], vec![0.0; h]);
    for x in 0..w {
        for y in 0..h {
            col[y] = g[y * w + x];
        }
        edt_1d(&col, &mut out, &mut v, &mut z);
        for y in 0..h {
            g[y * w + x] = out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&g[y * w..(y + 1) * w], &mut row_out, &mut v, &mut z);
        g[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    g
}

/// Crack edges (boundaries between differing 4-neighbours, the raster border counting as
/// unset) as cells of the doubled `(2W+1) × (2H+1)` lattice. A mask is determined by its
/// crack set, so two masks have equal crack sets exactly when they are equal.
fn crack_lattice(m: &Mask) -> Vec<bool> {
    let (w, h) = (m.width(), m.height());
    let lw = 2 * w + 1;
    let mut out = vec![false; lw * (2 * h + 1)];
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && m.get(x as usize, y as usize);
    for y in -1..h as i64 {
        for x in -1..w as i64 {
            if at(x, y) != at(x + 1, y) && y >= 0 {
                out[(2 * y + 1) as usize * lw + (2 * x + 2) as usize] = true;
            }
            if at(x, y) != at(x, y + 1) && x >= 0 {
                out[(2 * y + 2) as usize * lw + (2 * x + 1) as usize] = true;
            }
        }
    }
    out
}

/// Symmetric mean distance (pixels) between the crack-edge boundaries of two masks.
pub fn boundary_distance(a: &Mask, b: &Mask) -> Result<Option<f64>> {
    if !a.same_shape(b) {
        return Err(Error::invalid("boundary distance needs masks of equal size"));
    }
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(Some(0.0)),
        (true, false) | (false, true) => return Ok(None),
        _ => {}
    }
    let (lw, lh) = (2 * a.width() + 1, 2 * a.height() + 1);
    let (ca, cb) = (crack_lattice(a), crack_lattice(b));
    let (da, db) = (squared_edt(&ca, lw, lh), squared_edt(&cb, lw, lh));
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..ca.len() {
        if ca[i] {
            sum += db[i].sqrt();
            count += 1;
        }
        if cb[i] {
            sum += da[i].sqrt();
            count += 1;
        }
    }
    // lattice units are half pixels
    Ok(Some(sum / count as f64 / 2.0))
}

pub fn frame_metrics(t: usize, pred: &Mask, truth: &Mask) -> Result<FrameMetrics> {
    let overlap = iou(pred, truth)?;
    let centroid_error = match (centroid(pred), centroid(truth)) {
        (Ok(p), Ok(q)) => Some(((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()),
        _ => None,
    };
    Ok(FrameMetrics {
        t,
        iou: overlap,
        centroid_error,
        boundary_distance: boundary_distance(pred, truth)?,
        failure: overlap < FAILURE_IOU,
    })
}

/// Per-frame metrics (computed in parallel, reported in frame order) and aggregates.
pub fn evaluate(pred: &[Mask], truth: &[Mask]) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predicted masks for {} truth masks",
            pred.len(),
            truth.len()
        )));
    }
    let frames = pred
        .par_iter()
        .zip(truth)
        .enumerate()
        .map(|(t, (p, q))| frame_metrics(t, p, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_frames(frames))
}
