//! Single-writer tracking session: one `track_frame` call per frame, in order.

use serde::{Deserialize, Serialize};

use super::config::{MemoryConfig, SurgicalPhase, Viewpoint};
use super::features::{extract_features, grid_dims, mask_fractions, quality_factor, FeatureMap, C_K};
use super::read::{fuse_decode, predict_region, read_longterm, read_working, refine_boundary};
use super::sensory::{read_sensory, sensory_input, sensory_update, GruWeights, SensoryState};
use super::store::{evict_if_needed, working_insert, MemoryStore, WorkingEntry};
use crate::anatomy::AnatomicalRegion;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub const SNAPSHOT_VERSION: u32 = 1;

/// Per-frame diagnostics record; `consolidations` and `evictions` are session totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub t: usize,
    pub phi: f64,
    pub region: AnatomicalRegion,
    pub fused_area: usize,
    pub working_len: usize,
    pub longterm_len: usize,
    pub consolidations: usize,
    pub evictions: usize,
    pub fallback_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    LowQuality,
    AreaDrop,
    NoSources,
}

/// Store mutations, in order, for auditing the insertion law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MemoryEvent {
    Inserted {
        t: usize,
        phase: SurgicalPhase,
    },
    /// A frame on the insertion interval that was not stored.
    Skipped {
        t: usize,
        phase: SurgicalPhase,
        reason: SkipReason,
    },
    Consolidated {
        t: usize,
        prototypes: usize,
        dropped: Vec<usize>,
    },
    FifoDropped {
        t: usize,
        dropped: usize,
    },
    Evicted {
        t: usize,
        timestamp: usize,
        region: AnatomicalRegion,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub mask: Mask,
    pub diagnostics: FrameDiagnostics,
}

/// Versioned store serialization with the configuration echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub version: u32,
    pub last_t: Option<usize>,
    pub config: MemoryConfig,
    pub store: MemoryStore,
}

#[derive(Debug, Clone)]
struct Live {
    width: usize,
    height: usize,
    prev_mask: Mask,
    /// Area of the last accepted (non-fallback) mask.
    ref_area: usize,
    held: usize,
    last_t: usize,
}

#[derive(Debug, Clone)]
pub struct TrackingSession {
    cfg: MemoryConfig,
    gru: GruWeights,
    store: MemoryStore,
    live: Option<Live>,
    consolidations: usize,
    evictions: usize,
    events: Vec<MemoryEvent>,
}

impl TrackingSession {
    pub fn new(cfg: MemoryConfig) -> Result<Self> {
        cfg.validate()?;
        let gru = GruWeights::seeded(cfg.c_h, C_K, cfg.seed);
        Ok(TrackingSession {
            cfg,
            gru,
            store: MemoryStore::new(),
            live: None,
            consolidations: 0,
            evictions: 0,
            events: Vec::new(),
        })
    }

    /// Seeds the session from the first frame's mask and viewpoint; the frame is
    /// stored in working memory when `t` is on the phase interval.
    pub fn initialize(
        &mut self,
        img: &Image,
        mask: &Mask,
        viewpoint: Viewpoint,
        t: usize,
        phase: SurgicalPhase,
        region: Option<AnatomicalRegion>,
    ) -> Result<FrameOutput> {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::invalid("first-frame mask and image sizes differ"));
        }
        if mask.is_empty() {
            return Err(Error::invalid("first-frame mask is empty"));
        }
        viewpoint.validate()?;
        let phi = quality_factor(img, self.cfg.sharpness_ref);
        let feat = extract_features(img, self.cfg.stride)?;
        let mut state = SensoryState::zeros(feat.cols, feat.rows, self.cfg.c_h, mask.clone());
        if self.cfg.variant.uses_sensory() {
            // the first frame is trusted whatever its quality
            let x = sensory_input(&feat, &mask_fractions(mask, self.cfg.stride));
            state = sensory_update(&state, &self.gru, &x, 1.0)?;
            state.last_phi = phi;
        }
        self.store = MemoryStore {
            sensory: Some(state),
            working: Vec::new(),
            longterm: Vec::new(),
        };
        self.events.clear();
        self.consolidations = 0;
        self.evictions = 0;
        let region = region.unwrap_or(self.cfg.default_region);
        self.insert(feat, mask, viewpoint, t, phase, region, phi)?;
        self.live = Some(Live {
            width: img.width(),
            height: img.height(),
            prev_mask: mask.clone(),
            ref_area: mask.area(),
            held: 0,
            last_t: t,
        });
        Ok(FrameOutput {
            mask: mask.clone(),
            diagnostics: self.diagnostics(t, phi, region, mask.area(), false),
        })
    }

    pub fn is_initialized(&self) -> bool {
        self.live.is_some()
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.cfg
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    pub fn events(&self) -> &[MemoryEvent] {
        &self.events
    }

    /// Quality → features → reads → region → decode → sensory update → insert
    /// (consolidating at capacity) → eviction. Low quality or a sharp area drop keeps the
    /// previous mask, skips the sensory update and the working insert, and sets the flag.
    /// `region_hint` labels the stored entry; without one the predicted region is used.
    pub fn track_frame(
        &mut self,
        img: &Image,
        t: usize,
        phase: SurgicalPhase,
        viewpoint: Viewpoint,
        region_hint: Option<AnatomicalRegion>,
    ) -> Result<FrameOutput> {
        let live = self
            .live
            .as_ref()
            .ok_or_else(|| Error::InvalidState("tracking session is not initialized".into()))?;
        if img.width() != live.width || img.height() != live.height {
            return Err(Error::invalid(format!(
                "frame is {}x{}, session expects {}x{}",
                img.width(),
                img.height(),
                live.width,
                live.height
            )));
        }
        if t <= live.last_t {
            return Err(Error::invalid(format!(
                "frame index {t} does not follow {}",
                live.last_t
            )));
        }
        viewpoint.validate()?;
        let cfg = &self.cfg;
        let phi = quality_factor(img, cfg.sharpness_ref);
        let feat = extract_features(img, cfg.stride)?;

        let sensory = self
            .store
            .sensory
            .as_ref()
            .expect("initialized session has sensory state");
        let r_s = if cfg.variant.uses_sensory() {
            Some(read_sensory(sensory, &feat)?)
        } else {
            None
        };
        let r_w = read_working(&self.store, &feat, &viewpoint, cfg)?;
        let predicted = predict_region(&r_w, &self.store, cfg.default_region);
        let r_l = if cfg.variant.uses_longterm() {
            let r = read_longterm(&self.store, &feat, predicted, &cfg.sim_table, cfg);
            let uniform = 1.0 / self.store.longterm.len().max(1) as f64;
            for (p, &share) in self.store.longterm.iter_mut().zip(&r.share) {
                if share > uniform {
                    p.usage += 1;
                }
            }
            Some(r)
        } else {
            None
        };
        let decoded = fuse_decode(
            &feat,
            r_s.as_deref(),
            Some(&r_w),
            r_l.as_ref(),
            &cfg.fusion,
            &live.prev_mask,
        )?;
        let mut mask = decoded.mask;
        if !decoded.fallback && cfg.refine_boundary && !mask.is_empty() {
            mask = refine_boundary(img, &mask, cfg.stride);
        }

        let area_drop = live.ref_area > 0
            && (mask.area() as f64) < (1.0 - cfg.occlusion_area_drop) * live.ref_area as f64
            && live.held < cfg.max_hold_frames;
        let skip = if decoded.fallback {
            Some(SkipReason::NoSources)
        } else if phi < cfg.phi_min {
            Some(SkipReason::LowQuality)
        } else if area_drop {
            Some(SkipReason::AreaDrop)
        } else {
            None
        };
        let fallback = skip.is_some();
        if fallback {
            mask = live.prev_mask.clone();
        }

        if !fallback && cfg.variant.uses_sensory() {
            let x = sensory_input(&feat, &mask_fractions(&mask, cfg.stride));
            let mut next = sensory_update(sensory, &self.gru, &x, phi)?;
            next.last_mask = mask.clone();
            self.store.sensory = Some(next);
        }

        let region = region_hint.unwrap_or(predicted);
        match skip {
            None => self.insert(feat, &mask, viewpoint, t, phase, region, phi)?,
            Some(reason) => {
                if t.is_multiple_of(self.cfg.phase(phase).interval) {
                    self.events.push(MemoryEvent::Skipped { t, phase, reason });
                }
            }
        }
        let evicted = evict_if_needed(
            &mut self.store.longterm,
            t,
            self.cfg.phase(phase),
            self.cfg.decay,
            self.cfg.l_max,
        );
        self.evictions += evicted.len();
        for p in evicted {
            self.events.push(MemoryEvent::Evicted {
                t,
                timestamp: p.timestamp,
                region: p.region,
            });
        }

        let live = self.live.as_mut().expect("checked above");
        live.last_t = t;
        if fallback {
            live.held += 1;
        } else {
            live.held = 0;
            live.ref_area = mask.area();
        }
        live.prev_mask = mask.clone();
        let diagnostics = self.diagnostics(t, phi, predicted, mask.area(), fallback);
        Ok(FrameOutput { mask, diagnostics })
    }

    #[allow(clippy::too_many_arguments)]
    fn insert(
        &mut self,
        feat: FeatureMap,
        mask: &Mask,
        viewpoint: Viewpoint,
        t: usize,
        phase: SurgicalPhase,
        region: AnatomicalRegion,
        phi: f64,
    ) -> Result<()> {
        let entry = WorkingEntry {
            features: feat.with_mask(mask),
            viewpoint,
            timestamp: t,
            mask: mask.clone(),
            region,
            phi,
        };
        let out = working_insert(&mut self.store, entry, phase, &self.cfg)?;
        if let Some(c) = out.consolidation {
            self.consolidations += 1;
            self.events.push(MemoryEvent::Consolidated {
                t,
                prototypes: c.prototypes,
                dropped: c.dropped,
            });
        }
        if let Some(d) = out.dropped_fifo {
            self.events.push(MemoryEvent::FifoDropped { t, dropped: d });
        }
        if out.inserted {
            self.events.push(MemoryEvent::Inserted { t, phase });
        }
        Ok(())
    }

    fn diagnostics(
        &self,
        t: usize,
        phi: f64,
        region: AnatomicalRegion,
        area: usize,
        fallback: bool,
    ) -> FrameDiagnostics {
        FrameDiagnostics {
            t,
            phi,
            region,
            fused_area: area,
            working_len: self.store.working.len(),
            longterm_len: self.store.longterm.len(),
            consolidations: self.consolidations,
            evictions: self.evictions,
            fallback_flag: fallback,
        }
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            version: SNAPSHOT_VERSION,
            last_t: self.live.as_ref().map(|l| l.last_t),
            config: self.cfg.clone(),
            store: self.store.clone(),
        }
    }

    pub fn snapshot_json(&self) -> Result<String> {
        serde_json::to_string(&self.snapshot()).map_err(|e| Error::invalid(format!("snapshot serialization: {e}")))
    }
}

impl StoreSnapshot {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: StoreSnapshot =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("snapshot parse: {e}")))?;
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::invalid(format!("unsupported snapshot version {}", s.version)));
        }
        Ok(s)
    }
}

/// Checks the event log against the store: every interval frame is either inserted or
/// skipped, nothing off-interval is inserted, and the working timestamps equal the inserted
/// ones minus those dropped. `phases[t]` is the phase at frame `t`, `first..=last` the
/// tracked range.
pub fn audit_interval_law(
    events: &[MemoryEvent],
    working: &[WorkingEntry],
    cfg: &MemoryConfig,
    phases: &[SurgicalPhase],
    first: usize,
    last: usize,
) -> std::result::Result<(), String> {
    use std::collections::BTreeSet;
    let mut inserted = BTreeSet::new();
    let mut skipped = BTreeSet::new();
    let mut dropped = BTreeSet::new();
    for e in events {
        match e {
            MemoryEvent::Inserted { t, phase } => {
                if t % cfg.phase(*phase).interval != 0 {
                    return Err(format!("frame {t} inserted off its {phase} interval"));
                }
                inserted.insert(*t);
            }
            MemoryEvent::Skipped { t, .. } => {
                skipped.insert(*t);
            }
            MemoryEvent::Consolidated { dropped: d, .. } => dropped.extend(d.iter().copied()),
            MemoryEvent::FifoDropped { dropped: d, .. } => {
                dropped.insert(*d);
            }
            MemoryEvent::Evicted { .. } => {}
        }
    }
    for t in first..=last {
        let on = t % cfg.phase(phases[t]).interval == 0;
        if on && !inserted.contains(&t) && !skipped.contains(&t) {
            return Err(format!("interval frame {t} neither inserted nor skipped"));
        }
        if !on && (inserted.contains(&t) || skipped.contains(&t)) {
            return Err(format!("off-interval frame {t} recorded"));
        }
    }
    let expected: BTreeSet<usize> = inserted.difference(&dropped).copied().collect();
    let actual: BTreeSet<usize> = working.iter().map(|e| e.timestamp).collect();
    if expected != actual {
        return Err(format!(
            "working timestamps {actual:?} differ from the log {expected:?}"
        ));
    }
    Ok(())
}

/// Grid dimensions a session with this config uses for `width × height` frames.
pub fn session_grid(cfg: &MemoryConfig, width: usize, height: usize) -> (usize, usize) {
    grid_dims(width, height, cfg.stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::config::Variant;
    use crate::segmentation::{centroid, iou};

    fn disc_frame(cx: f64, cy: f64) -> (Image, Mask) {
        let mask = Mask::from_fn(96, 96, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            dx * dx + dy * dy <= 20.0 * 20.0
        });
        let img = Image::new(
            96,
            96,
            (0..96 * 96)
                .map(|i| {
                    let (x, y) = (i % 96, i / 96);
                    // grain keeps the frame sharp enough for the quality gate
                    let n = ((x * 7 + y * 13 + (x * y) % 11) % 23) as u8;
                    if mask.get(x, y) {
                        [215 + n, 210 + n, 200 + n]
                    } else {
                        [90 + n, 30 + n / 2, 25]
                    }
                })
                .collect(),
        )
        .unwrap();
        (img, mask)
    }

    fn vp() -> Viewpoint {
        Viewpoint::new(0.0, 0.0, 3.0).unwrap()
    }

    fn session(cfg: MemoryConfig, img: &Image, mask: &Mask) -> TrackingSession {
        let mut s = TrackingSession::new(cfg).unwrap();
        s.initialize(img, mask, vp(), 0, SurgicalPhase::Exploration, None)
            .unwrap();
        s
    }

    #[test]
    fn uninitialized_session_is_an_invalid_state() {
        let (img, _) = disc_frame(48.0, 48.0);
        let mut s = TrackingSession::new(MemoryConfig::default()).unwrap();
        let e = s
            .track_frame(&img, 1, SurgicalPhase::Exploration, vp(), None)
            .unwrap_err();
        assert!(matches!(e, Error::InvalidState(_)));
    }

    #[test]
    fn static_scene_keeps_the_mask() {
        let (img, mask) = disc_frame(48.0, 48.0);
        let mut s = session(MemoryConfig::default(), &img, &mask);
        for t in 1..10 {
            let out = s.track_frame(&img, t, SurgicalPhase::Exploration, vp(), None).unwrap();
            assert!(!out.diagnostics.fallback_flag);
            assert!(iou(&out.mask, &mask).unwrap() >= 0.95, "t={t}");
        }
    }

    #[test]
    fn black_frame_falls_back_and_freezes_sensory_state() {
        let (img, mask) = disc_frame(48.0, 48.0);
        let mut s = session(MemoryConfig::default(), &img, &mask);
        let mut prev = None;
        for t in 1..=5 {
            let frame = if t == 5 {
                Image::filled(96, 96, [0, 0, 0])
            } else {
                img.clone()
            };
            let before = s.store().sensory.clone();
            let out = s
                .track_frame(&frame, t, SurgicalPhase::Exploration, vp(), None)
                .unwrap();
            if t == 5 {
                assert!(out.diagnostics.fallback_flag);
                assert_eq!(out.diagnostics.phi, 0.0);
                assert_eq!(s.store().sensory, before);
                assert_eq!(Some(out.mask.clone()), prev);
            }
            prev = Some(out.mask);
        }
        assert!(s
            .events()
            .iter()
            .all(|e| !matches!(e, MemoryEvent::Inserted { t: 5, .. })));
    }

    #[test]
    fn translating_disc_is_followed() {
        let (img, mask) = disc_frame(30.0, 48.0);
        let mut s = session(MemoryConfig::default(), &img, &mask);
        for t in 1..=50 {
            let (img, truth) = disc_frame(30.0 + t as f64, 48.0);
            let out = s.track_frame(&img, t, SurgicalPhase::Exploration, vp(), None).unwrap();
            let (a, b) = (centroid(&out.mask).unwrap(), centroid(&truth).unwrap());
            let err = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            assert!(err <= 2.0 * 8.0, "t={t}: centroid error {err}");
        }
    }

    #[test]
    fn interval_law_and_capacity_hold_with_the_audit() {
        let cfg = MemoryConfig {
            t_max: 8,
            retain_after_consolidation: 3,
            l_max: 10,
            ..MemoryConfig::default()
        };
        let (img, mask) = disc_frame(40.0, 48.0);
        let mut s = session(cfg.clone(), &img, &mask);
        let phases: Vec<SurgicalPhase> = (0..=120)
            .map(|t| match t {
                0..=39 => SurgicalPhase::Exploration,
                40..=79 => SurgicalPhase::TunnelPositioning,
                _ => SurgicalPhase::Drilling,
            })
            .collect();
        for t in 1..=120 {
            let (img, _) = disc_frame(40.0 + (t % 15) as f64, 48.0);
            let frame = if t % 15 == 0 {
                Image::filled(96, 96, [255, 255, 255])
            } else {
                img
            };
            s.track_frame(&frame, t, phases[t], vp(), None).unwrap();
            assert!(s.store().working.len() <= cfg.t_max);
            assert!(s.store().longterm.len() <= cfg.l_max);
        }
        audit_interval_law(s.events(), &s.store().working, &cfg, &phases, 0, 120).unwrap();
        assert!(s.events().iter().any(|e| matches!(e, MemoryEvent::Skipped { .. })));
        assert!(s.events().iter().any(|e| matches!(e, MemoryEvent::Consolidated { .. })));
    }

    #[test]
    fn snapshots_are_deterministic_and_round_trip() {
        let run = || {
            let (img, mask) = disc_frame(40.0, 48.0);
            let mut s = session(MemoryConfig::default(), &img, &mask);
            for t in 1..=12 {
                let (img, _) = disc_frame(40.0 + t as f64, 48.0);
                s.track_frame(&img, t, SurgicalPhase::Exploration, vp(), None).unwrap();
            }
            s.snapshot_json().unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let snap = StoreSnapshot::from_json(&a).unwrap();
        assert_eq!(snap.version, SNAPSHOT_VERSION);
        assert_eq!(serde_json::to_string(&snap).unwrap(), a);
    }

    #[test]
    fn variants_track_a_static_scene() {
        let (img, mask) = disc_frame(48.0, 48.0);
        for v in [
            Variant::NoLongterm,
            Variant::NoSensory,
            Variant::FixedSimilarity,
            Variant::SingleLevel,
        ] {
            let mut s = session(MemoryConfig::with_variant(v), &img, &mask);
            let out = s.track_frame(&img, 1, SurgicalPhase::Exploration, vp(), None).unwrap();
            assert!(iou(&out.mask, &mask).unwrap() >= 0.9, "{v}");
        }
    }
}
