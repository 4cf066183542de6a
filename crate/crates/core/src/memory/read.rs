//! Memory reads and the fusion decoder.

use rayon::prelude::*;

use super::config::{viewpoint_distance, MemoryConfig, SimTable, Viewpoint};
use super::features::{dot, upsample_cells, FeatureMap, Value, C_V, V_MASK, V_MEAN, V_RGB};
use super::store::MemoryStore;
use crate::anatomy::AnatomicalRegion;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::segmentation::largest_component;

/// Per-cell working-memory aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingRead {
    /// Best key dot product per query cell.
    pub affinity: Vec<f64>,
    pub value: Vec<Value>,
    /// Weighted foreground vote from the matched cells' mask fractions.
    pub vote: Vec<f64>,
    /// `(entry index, cell index)` of the best match per query cell.
    pub best_match: Vec<Option<(usize, usize)>>,
    /// Match weight per region, each query cell contributing a total of 1.
    pub region_weights: [f64; 5],
    pub empty: bool,
}

impl WorkingRead {
    pub fn neutral(cells: usize) -> Self {
        WorkingRead {
            affinity: vec![0.0; cells],
            value: vec![[0.0; C_V]; cells],
            vote: vec![0.0; cells],
            best_match: vec![None; cells],
            region_weights: [0.0; 5],
            empty: true,
        }
    }
}

/// Weight of one match: `exp(τ·(sim − 1))·exp(−D_V)`.
pub fn match_weight(sim: f64, temperature: f64, viewpoint_distance: f64) -> f64 {
    (temperature * (sim - 1.0)).exp() * (-viewpoint_distance).exp()
}

/// For each query cell, the `top_k` most similar cells (key dot product) within
/// `cfg.read_radius` cells in the newest `cfg.read_entries` entries, weighted by
/// [`match_weight`]. An empty memory gives the neutral (all-zero) read.
pub fn read_working(
    store: &MemoryStore,
    feat: &FeatureMap,
    v_t: &Viewpoint,
    cfg: &MemoryConfig,
) -> Result<WorkingRead> {
    let cells = feat.cells();
    if store.working.is_empty() {
        return Ok(WorkingRead::neutral(cells));
    }
    let first = store.working.len().saturating_sub(cfg.read_entries);
    let entries = &store.working[first..];
    if entries.iter().any(|e| !e.features.same_grid(feat)) {
        return Err(Error::invalid("working entry grid differs from the query features"));
    }
    let discount: Vec<f64> = entries
        .iter()
        .map(|e| {
            if cfg.variant.uses_viewpoints() {
                viewpoint_distance(v_t, &e.viewpoint, &cfg.viewpoint_weights)
            } else {
                0.0
            }
        })
        .collect();
    let (cols, rows) = (feat.cols as i64, feat.rows as i64);
    let radius = cfg.read_radius as i64;
    let k = cfg.top_k;
    let per_cell: Vec<(f64, Value, f64, Option<(usize, usize)>, [f64; 5])> = (0..cells)
        .into_par_iter()
        .map(|q| {
            let key = &feat.keys[q];
            let (qx, qy) = ((q as i64) % cols, (q as i64) / cols);
            // (sim, entry, cell), sorted by descending sim; earlier candidates win ties
            let mut top: Vec<(f64, usize, usize)> = Vec::with_capacity(k + 1);
            for (ei, e) in entries.iter().enumerate() {
                for y in (qy - radius).max(0)..=(qy + radius).min(rows - 1) {
                    for x in (qx - radius).max(0)..=(qx + radius).min(cols - 1) {
                        let c = (y * cols + x) as usize;
                        let sim = dot(key, &e.features.keys[c]);
                        if top.len() < k || sim > top[top.len() - 1].0 {
                            let pos = top.iter().position(|t| sim > t.0).unwrap_or(top.len());
                            top.insert(pos, (sim, ei, c));
                            top.truncate(k);
                        }
                    }
                }
            }
            let mut total = 0.0;
            let mut value = [0.0; C_V];
            let mut vote = 0.0;
            let mut regions = [0.0; 5];
            let weights: Vec<f64> = top
                .iter()
                .map(|&(s, ei, _)| match_weight(s, cfg.key_temperature, discount[ei]))
                .collect();
            for (&(_, ei, c), &w) in top.iter().zip(&weights) {
                total += w;
                let v = &entries[ei].features.values[c];
                for i in 0..C_V {
                    value[i] += w * v[i];
                }
                vote += w * v[V_MASK];
            }
            if total > 0.0 {
                value = value.map(|x| x / total);
                vote /= total;
                for (&(_, ei, _), &w) in top.iter().zip(&weights) {
                    regions[entries[ei].region.index()] += w / total;
                }
            }
            let best = top.first().map(|&(_, ei, c)| (first + ei, c));
            (top.first().map_or(0.0, |t| t.0), value, vote, best, regions)
        })
        .collect();
    let mut out = WorkingRead::neutral(cells);
    out.empty = false;
    for (q, (aff, value, vote, best, regions)) in per_cell.into_iter().enumerate() {
        out.affinity[q] = aff;
        out.value[q] = value;
        out.vote[q] = vote;
        out.best_match[q] = best;
        for r in 0..5 {
            out.region_weights[r] += regions[r];
        }
    }
    Ok(out)
}

/// Weighted majority region of the working matches (declaration order breaks ties); with
/// no working matches, the newest prototype's region; otherwise `default`.
pub fn predict_region(read: &WorkingRead, store: &MemoryStore, default: AnatomicalRegion) -> AnatomicalRegion {
    if !read.empty && read.region_weights.iter().any(|&w| w > 0.0) {
        let mut best = 0;
        for r in 1..5 {
            if read.region_weights[r] > read.region_weights[best] {
                best = r;
            }
        }
        return AnatomicalRegion::from_index(best).expect("five regions");
    }
    store
        .longterm
        .iter()
        .enumerate()
        .max_by_key(|(i, p)| (p.timestamp, *i))
        .map_or(default, |(_, p)| p.region)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongtermRead {
    /// Region weights `ω_j` (softmax of region similarity).
    pub omega: Vec<f64>,
    /// Per query cell, attention over prototypes (softmax of scaled key dot products).
    pub attention: Vec<Vec<f64>>,
    /// `Σ_j ω_j·a_j·v_j` per cell, as written.
    pub raw: Vec<Value>,
    /// The same sum divided by `Σ_j ω_j·a_j`.
    pub value: Vec<Value>,
    /// Foreground evidence: retrieved mask channel × appearance agreement with the query cell.
    pub vote: Vec<f64>,
    /// Mean normalized share `ω_j·a_j / Σ ω·a` over cells, per prototype.
    pub share: Vec<f64>,
    pub empty: bool,
}

/// Appearance summary compared by the long-term vote: normalized intensity and chromaticity.
fn appearance(v: &Value) -> [f64; 3] {
    let s = v[V_RGB] + v[V_RGB + 1] + v[V_RGB + 2] + 1e-6;
    [v[V_MEAN], v[V_RGB] / s, v[V_RGB + 1] / s]
}

pub fn read_longterm(
    store: &MemoryStore,
    feat: &FeatureMap,
    region: AnatomicalRegion,
    sim: &SimTable,
    cfg: &MemoryConfig,
) -> LongtermRead {
    let cells = feat.cells();
    let n = store.longterm.len();
    if n == 0 {
        return LongtermRead {
            omega: vec![],
            attention: vec![vec![]; cells],
            raw: vec![[0.0; C_V]; cells],
            value: vec![[0.0; C_V]; cells],
            vote: vec![0.0; cells],
            share: vec![],
            empty: true,
        };
    }
    let omega = softmax(
        &store
            .longterm
            .iter()
            .map(|p| cfg.sim_temperature * sim.get(region, p.region))
            .collect::<Vec<_>>(),
    );
    let two_sigma2 = 2.0 * cfg.appearance_sigma * cfg.appearance_sigma;
    let rows: Vec<(Vec<f64>, Value, Value, f64, Vec<f64>)> = (0..cells)
        .into_par_iter()
        .map(|q| {
            let key = &feat.keys[q];
            let att = softmax(
                &store
                    .longterm
                    .iter()
                    .map(|p| cfg.key_temperature * dot(key, &p.key))
                    .collect::<Vec<_>>(),
            );
            let mut raw = [0.0; C_V];
            let mut norm = 0.0;
            let mut contrib = vec![0.0; n];
            for j in 0..n {
                let w = omega[j] * att[j];
                contrib[j] = w;
                norm += w;
                for i in 0..C_V {
                    raw[i] += w * store.longterm[j].value[i];
                }
            }
            let value = if norm > 0.0 { raw.map(|x| x / norm) } else { [0.0; C_V] };
            if norm > 0.0 {
                for c in contrib.iter_mut() {
                    *c /= norm;
                }
            }
            let (a, b) = (appearance(&feat.values[q]), appearance(&value));
            let d2: f64 = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum();
            let vote = value[V_MASK].clamp(0.0, 1.0) * (-d2 / two_sigma2).exp();
            (att, raw, value, vote, contrib)
        })
        .collect();
    let mut share = vec![0.0; n];
    let mut out = LongtermRead {
        omega,
        attention: Vec::with_capacity(cells),
        raw: Vec::with_capacity(cells),
        value: Vec::with_capacity(cells),
        vote: Vec::with_capacity(cells),
        share: vec![],
        empty: false,
    };
    for (att, raw, value, vote, contrib) in rows {
        for j in 0..n {
            share[j] += contrib[j] / cells as f64;
        }
        out.attention.push(att);
        out.raw.push(raw);
        out.value.push(value);
        out.vote.push(vote);
    }
    out.share = share;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub mask: Mask,
    /// Fused per-cell score.
    pub scores: Vec<f64>,
    pub fallback: bool,
}

/// Fuses the available reads per cell (`w_S·R_S + w_W·vote_W + w_L·vote_L`, renormalized over
/// the sources present), thresholds above 0.5, upsamples by nearest cell and keeps the
/// largest component. No source at all returns `prev` with the fallback flag.
#[allow(clippy::too_many_arguments)]
pub fn fuse_decode(
    feat: &FeatureMap,
    r_s: Option<&[f64]>,
    r_w: Option<&WorkingRead>,
    r_l: Option<&LongtermRead>,
    fusion: &super::config::FusionWeights,
    prev: &Mask,
) -> Result<Decoded> {
    let cells = feat.cells();
    let mut sources: Vec<(f64, &[f64])> = Vec::new();
    if let Some(s) = r_s {
        sources.push((fusion.sensory, s));
    }
    if let Some(w) = r_w.filter(|w| !w.empty) {
        sources.push((fusion.working, &w.vote));
    }
    if let Some(l) = r_l.filter(|l| !l.empty) {
        sources.push((fusion.longterm, &l.vote));
    }
    sources.retain(|(w, _)| *w > 0.0);
    if sources.iter().any(|(_, s)| s.len() != cells) {
        return Err(Error::invalid("read planes do not match the feature grid"));
    }
    let total: f64 = sources.iter().map(|(w, _)| w).sum();
    if sources.is_empty() || total <= 0.0 {
        return Ok(Decoded {
            mask: prev.clone(),
            scores: vec![0.0; cells],
            fallback: true,
        });
    }
    let scores: Vec<f64> = (0..cells)
        .map(|c| sources.iter().map(|(w, s)| w * s[c]).sum::<f64>() / total)
        .collect();
    let fg: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
    let mask = largest_component(&upsample_cells(
        &fg,
        feat.cols,
        feat.stride,
        prev.width(),
        prev.height(),
    ));
    Ok(Decoded {
        mask,
        scores,
        fallback: false,
    })
}

/// Pixel-level boundary refinement: pixels in cells on the coarse mask's boundary are
/// reassigned to the nearer of the local foreground/background mean colours, estimated from
/// interior cells within a few cells; then the largest component is kept.
pub fn refine_boundary(img: &Image, coarse: &Mask, stride: usize) -> Mask {
    let (w, h) = (img.width(), img.height());
    let (cols, rows) = super::features::grid_dims(w, h, stride);
    let fr = super::features::mask_fractions(coarse, stride);
    let cell_fg: Vec<bool> = fr.iter().map(|&f| f > 0.5).collect();
    let at = |x: i64, y: i64| -> Option<bool> {
        (x >= 0 && y >= 0 && x < cols as i64 && y < rows as i64).then(|| cell_fg[y as usize * cols + x as usize])
    };
    let mut boundary = vec![false; cols * rows];
    let mut sums = vec![[0.0f64; 4]; cols * rows]; // r, g, b, count for interior cells
    for cy in 0..rows {
        for cx in 0..cols {
            let me = cell_fg[cy * cols + cx];
            let mut edge = false;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(o) = at(cx as i64 + dx, cy as i64 + dy) {
                        edge |= o != me;
                    }
                }
            }
            boundary[cy * cols + cx] = edge;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let c = (y / stride) * cols + x / stride;
            if !boundary[c] {
                let p = img.get(x, y);
                let s = &mut sums[c];
                s[0] += p[0] as f64;
                s[1] += p[1] as f64;
                s[2] += p[2] as f64;
                s[3] += 1.0;
            }
        }
    }
    let global = |fg: bool| {
        let mut acc = [0.0; 4];
        for (c, s) in sums.iter().enumerate() {
            if cell_fg[c] == fg {
                for i in 0..4 {
                    acc[i] += s[i];
                }
            }
        }
        acc
    };
    let (gf, gb) = (global(true), global(false));
    if gf[3] == 0.0 || gb[3] == 0.0 {
        return coarse.clone();
    }
    const REACH: i64 = 3;
    let local_mean = |cx: usize, cy: usize, fg: bool, fallback: &[f64; 4]| {
        let mut acc = [0.0; 4];
        for y in (cy as i64 - REACH).max(0)..=(cy as i64 + REACH).min(rows as i64 - 1) {
            for x in (cx as i64 - REACH).max(0)..=(cx as i64 + REACH).min(cols as i64 - 1) {
                let c = y as usize * cols + x as usize;
                if cell_fg[c] == fg {
                    for i in 0..4 {
                        acc[i] += sums[c][i];
                    }
                }
            }
        }
        let src = if acc[3] > 0.0 { acc } else { *fallback };
        [src[0] / src[3], src[1] / src[3], src[2] / src[3]]
    };
    let means: Vec<Option<([f64; 3], [f64; 3])>> = (0..cols * rows)
        .map(|c| {
            boundary[c].then(|| {
                (
                    local_mean(c % cols, c / cols, true, &gf),
                    local_mean(c % cols, c / cols, false, &gb),
                )
            })
        })
        .collect();
    let refined = Mask::from_fn(w, h, |x, y| {
        let c = (y / stride) * cols + x / stride;
        match &means[c] {
            None => cell_fg[c],
            Some((f, b)) => {
                let p = img.get(x, y);
                let d = |m: &[f64; 3]| (0..3).map(|i| (p[i] as f64 - m[i]).powi(2)).sum::<f64>();
                d(f) < d(b)
            }
        }
    });
    largest_component(&refined)
}
