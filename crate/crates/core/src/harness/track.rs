//! Drives a tracking session over a frame source and scores it against ground truth.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{frame_metrics, EvalReport, FrameMetrics};
use super::sequence::{mask_path, FrameTruth, SequenceDir, SequenceGenerator};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::memory::{FrameDiagnostics, MemoryConfig, TrackingSession, Variant};
use crate::segmentation::{segment_first_frame, HsvThresholds, RegionGrowingOracle};

/// Frames with their ground truth, loadable in any order.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;
    fn load(&self, t: usize) -> Result<(Image, Mask, FrameTruth)>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for SequenceGenerator {
    fn len(&self) -> usize {
        SequenceGenerator::len(self)
    }

    fn load(&self, t: usize) -> Result<(Image, Mask, FrameTruth)> {
        let f = self.frame(t)?;
        Ok((f.image, f.mask, f.truth))
    }
}

impl FrameSource for SequenceDir {
    fn len(&self) -> usize {
        self.truth.len()
    }

    fn load(&self, t: usize) -> Result<(Image, Mask, FrameTruth)> {
        Ok((self.frame(t)?, self.mask(t)?, self.truth[t].clone()))
    }
}

/// How the session gets its first-frame mask.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMask {
    /// HSV thresholding refined by the region-growing oracle.
    Segment(HsvThresholds),
    /// The ground-truth mask of frame 0.
    Truth,
    Given(Mask),
}

#[derive(Debug, Clone)]
pub struct TrackOptions {
    pub config: MemoryConfig,
    pub init: InitMask,
    /// Label stored entries with the dominant visible region from the ground truth.
    pub truth_regions: bool,
    pub keep_masks: bool,
    /// Frames rendered or loaded ahead in parallel.
    pub prefetch: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            config: MemoryConfig::default(),
            init: InitMask::Segment(HsvThresholds::default()),
            truth_regions: true,
            keep_masks: false,
            prefetch: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackRun {
    pub report: EvalReport,
    pub diagnostics: Vec<FrameDiagnostics>,
    /// Predicted masks, when requested.
    pub masks: Vec<Mask>,
    /// Wall time spent inside `initialize` / `track_frame` only.
    pub track_seconds: f64,
    pub peak_total: usize,
    pub session: TrackingSession,
}

impl TrackRun {
    /// Frames per second over the tracked frames (frame 0 included).
    pub fn fps(&self) -> f64 {
        self.report.frames as f64 / self.track_seconds.max(1e-12)
    }
}

pub fn first_mask(init: &InitMask, img: &Image, truth: &Mask) -> Result<Mask> {
    match init {
        InitMask::Segment(th) => Ok(segment_first_frame(img, th, &RegionGrowingOracle::default())?.mask),
        InitMask::Truth => Ok(truth.clone()),
        InitMask::Given(m) => Ok(m.clone()),
    }
}

/// Tracks every frame in order, scoring each against its truth mask as it goes.
pub fn track_source(src: &dyn FrameSource, opts: &TrackOptions) -> Result<TrackRun> {
    let n = src.len();
    if n == 0 {
        return Err(Error::invalid("cannot track an empty sequence"));
    }
    let mut session = TrackingSession::new(opts.config.clone())?;
    let mut metrics: Vec<FrameMetrics> = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    let mut masks = Vec::new();
    let (mut peak_w, mut peak_l, mut peak_total) = (0, 0, 0);
    let mut elapsed = 0.0;
    let chunk = opts.prefetch.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let batch = (start..end)
            .into_par_iter()
            .map(|t| src.load(t))
            .collect::<Result<Vec<_>>>()?;
        for (t, (img, truth_mask, truth)) in (start..end).zip(batch) {
            let region = if opts.truth_regions { truth.region } else { None };
            let out = if t == 0 {
                let m = first_mask(&opts.init, &img, &truth_mask)?;
                let clock = Instant::now();
                let out = session.initialize(&img, &m, truth.viewpoint, t, truth.phase, region)?;
                elapsed += clock.elapsed().as_secs_f64();
                out
            } else {
                let clock = Instant::now();
                let out = session.track_frame(&img, t, truth.phase, truth.viewpoint, region)?;
                elapsed += clock.elapsed().as_secs_f64();
                out
            };
            let d = &out.diagnostics;
            peak_w = peak_w.max(d.working_len);
            peak_l = peak_l.max(d.longterm_len);
            peak_total = peak_total.max(d.working_len + d.longterm_len);
            metrics.push(frame_metrics(t, &out.mask, &truth_mask)?);
            diagnostics.push(out.diagnostics);
            if opts.keep_masks {
                masks.push(out.mask);
            }
        }
        start = end;
    }
    let mut report = EvalReport::from_frames(metrics);
    report.peak_working = Some(peak_w);
    report.peak_longterm = Some(peak_l);
    Ok(TrackRun {
        report,
        diagnostics,
        masks,
        track_seconds: elapsed,
        peak_total,
        session,
    })
}

/// Writes `masks/%06d.pgm` under `dir`.
pub fn write_masks(dir: &Path, masks: &[Mask]) -> Result<()> {
    let sub = dir.join("masks");
    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    masks
        .par_iter()
        .enumerate()
        .try_for_each(|(t, m)| m.write_pgm(&mask_path(dir, t)))
}

/// Reads `masks/000000.pgm`, `masks/000001.pgm`, … under `dir` until the first gap.
pub fn read_masks(dir: &Path) -> Result<Vec<Mask>> {
    let mut out = Vec::new();
    loop {
        let p = mask_path(dir, out.len());
        if !p.is_file() {
            break;
        }
        out.push(Mask::read_pgm(&p)?);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no masks/000000.pgm", dir.display())));
    }
    Ok(out)
}

/// Per-run summary written next to predicted masks. Timing lives here rather than in
/// evaluation reports so that those stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub variant: Variant,
    pub frames: usize,
    pub peak_working: usize,
    pub peak_longterm: usize,
    pub peak_entries: usize,
    pub track_seconds: f64,
    pub fps: f64,
}

impl TrackRun {
    pub fn summary(&self) -> TrackSummary {
        TrackSummary {
            variant: self.session.config().variant,
            frames: self.report.frames,
            peak_working: self.report.peak_working.unwrap_or(0),
            peak_longterm: self.report.peak_longterm.unwrap_or(0),
            peak_entries: self.peak_total,
            track_seconds: self.track_seconds,
            fps: self.fps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub failure_rate: f64,
    pub mean_iou: f64,
    pub mean_centroid_error: f64,
    pub mean_boundary_distance: f64,
    pub peak_working: usize,
    pub peak_longterm: usize,
    /// Largest working + long-term entry count at any frame.
    pub peak_entries: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "variant,failure_rate,mean_iou,mean_centroid_error,mean_boundary_distance,peak_working,peak_longterm,peak_entries\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.variant,
                r.failure_rate,
                r.mean_iou,
                r.mean_centroid_error,
                r.mean_boundary_distance,
                r.peak_working,
                r.peak_longterm,
                r.peak_entries
            ));
        }
        s
    }
}

/// One tracking run per variant (in parallel; each run is itself sequential), all sharing
/// `opts` apart from the variant switch. Rows follow the order of `variants`.
pub fn run_ablation(src: &dyn FrameSource, variants: &[Variant], opts: &TrackOptions) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::invalid("ablation needs at least one variant"));
    }
    let rows = variants
        .par_iter()
        .map(|&variant| {
            let o = TrackOptions {
                config: MemoryConfig {
                    variant,
                    ..opts.config.clone()
                },
                keep_masks: false,
                ..opts.clone()
            };
            let run = track_source(src, &o)?;
            let r = &run.report;
            Ok(AblationRow {
                variant,
                failure_rate: r.failure_rate,
                mean_iou: r.iou.mean,
                mean_centroid_error: r.centroid_error.mean,
                mean_boundary_distance: r.boundary_distance.mean,
                peak_working: r.peak_working.unwrap_or(0),
                peak_longterm: r.peak_longterm.unwrap_or(0),
                peak_entries: run.peak_total,
                report: run.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}
