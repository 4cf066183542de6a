//! Working entries, long-term prototypes, consolidation, potentiation and forgetting.

use serde::{Deserialize, Serialize};

use super::config::{
    viewpoint_distance, MemoryConfig, PhaseConfig, PotentiationWeights, SurgicalPhase, Viewpoint, ViewpointWeights,
};
use super::features::{dot, FeatureMap, Key, Value, C_K, C_V, V_MASK};
use super::sensory::SensoryState;
use crate::anatomy::AnatomicalRegion;
use crate::error::{Error, Result};
use crate::image::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingEntry {
    pub features: FeatureMap,
    pub viewpoint: Viewpoint,
    pub timestamp: usize,
    pub mask: Mask,
    pub region: AnatomicalRegion,
    /// Quality factor of the frame the entry came from.
    pub phi: f64,
}

impl WorkingEntry {
    /// Mask-weighted mean of the cell keys, unit-normalized; plain mean when the mask is empty.
    pub fn pooled_key(&self) -> Key {
        let f = &self.features;
        let total: f64 = f.values.iter().map(|v| v[V_MASK]).sum();
        let mut k = [0.0; C_K];
        for (key, v) in f.keys.iter().zip(&f.values) {
            let w = if total > 0.0 { v[V_MASK] } else { 1.0 };
            for i in 0..C_K {
                k[i] += w * key[i];
            }
        }
        unit(k)
    }

    /// Mask-weighted mean of the cell values; plain mean when the mask is empty.
    pub fn pooled_value(&self) -> Value {
        let f = &self.features;
        let total: f64 = f.values.iter().map(|v| v[V_MASK]).sum();
        let norm = if total > 0.0 { total } else { f.values.len() as f64 };
        let mut out = [0.0; C_V];
        for v in &f.values {
            let w = if total > 0.0 { v[V_MASK] } else { 1.0 };
            for i in 0..C_V {
                out[i] += w * v[i];
            }
        }
        out.map(|x| x / norm)
    }

    pub fn pooled(&self) -> Pooled {
        Pooled {
            key: self.pooled_key(),
            value: self.pooled_value(),
            timestamp: self.timestamp,
            viewpoint: self.viewpoint,
            phi: self.phi,
        }
    }
}

/// Cell-pooled summary of a working entry, as consumed by consolidation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pooled {
    pub key: Key,
    pub value: Value,
    pub timestamp: usize,
    pub viewpoint: Viewpoint,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermPrototype {
    pub key: Key,
    pub value: Value,
    pub region: AnatomicalRegion,
    pub timestamp: usize,
    pub usage: u64,
    pub viewpoint: Viewpoint,
}

pub fn unit(v: Key) -> Key {
    let n = dot(&v, &v).sqrt();
    if n < 1e-12 {
        let mut e = [0.0; C_K];
        e[0] = 1.0;
        e
    } else {
        v.map(|x| x / n)
    }
}

/// `1 − cos` between keys.
pub fn key_distance(a: &Key, b: &Key) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return 1.0;
    }
    1.0 - (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryStore {
    pub sensory: Option<SensoryState>,
    pub working: Vec<WorkingEntry>,
    pub longterm: Vec<LongTermPrototype>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Weighted neighbour average; weights `exp(−α·D(k_i,k_j) − β·|t_i − t_j| − γ·D_V)·Φ_i` are
/// normalized before use. All-zero weights fall back to the medoid entry itself.
/// `viewpoints = None` treats every viewpoint distance as 0.
pub fn potentiate(
    neighbors: &[Pooled],
    medoid: usize,
    w: &PotentiationWeights,
    viewpoints: Option<&ViewpointWeights>,
) -> Result<(Key, Value)> {
    if neighbors.is_empty() || medoid >= neighbors.len() {
        return Err(Error::invalid(
            "potentiation needs a non-empty neighbourhood containing the medoid",
        ));
    }
    if neighbors.iter().any(|n| !(0.0..=1.0).contains(&n.phi)) {
        return Err(Error::invalid("quality factors must lie in [0, 1]"));
    }
    let m = &neighbors[medoid];
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|n| {
            let dv = viewpoints.map_or(0.0, |vw| viewpoint_distance(&n.viewpoint, &m.viewpoint, vw));
            let dt = (n.timestamp as f64 - m.timestamp as f64).abs();
            (-w.alpha * key_distance(&n.key, &m.key) - w.beta * dt - w.gamma * dv).exp() * n.phi
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Ok((m.key, m.value));
    }
    let mut k = [0.0; C_K];
    let mut v = [0.0; C_V];
    for (n, &wi) in neighbors.iter().zip(&weights) {
        let a = wi / total;
        for i in 0..C_K {
            k[i] += a * n.key[i];
        }
        for i in 0..C_V {
            v[i] += a * n.value[i];
        }
    }
    Ok((k, v))
}

/// Greedy k-medoids under `1 − cos`: each step adds the entry that most reduces
/// `Σ_i min_{j ∈ S} D(k_i, k_j)`; ties keep the lowest index.
pub fn greedy_medoids(keys: &[Key], k: usize) -> Vec<usize> {
    let n = keys.len();
    let k = k.min(n);
    let dist: Vec<Vec<f64>> = keys
        .iter()
        .map(|a| keys.iter().map(|b| key_distance(a, b)).collect())
        .collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let mut best = (usize::MAX, f64::INFINITY);
        for cand in 0..n {
            if chosen.contains(&cand) {
                continue;
            }
            let cost: f64 = (0..n).map(|i| nearest[i].min(dist[i][cand])).sum();
            if cost < best.1 {
                best = (cand, cost);
            }
        }
        chosen.push(best.0);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist[i][best.0]);
        }
    }
    chosen
}

/// Per-region quotas: `max(1, round(n_p · |populated| · ω_r / Σ_populated ω))`, capped by the
/// number of entries in the region. Unpopulated regions get 0.
pub fn region_quotas(counts: &[usize; 5], phase: &PhaseConfig, n_p: usize) -> [usize; 5] {
    let populated: Vec<usize> = (0..5).filter(|&r| counts[r] > 0).collect();
    let wsum: f64 = populated.iter().map(|&r| phase.region_weights[r]).sum();
    let budget = (n_p * populated.len()) as f64;
    let mut q = [0usize; 5];
    for &r in &populated {
        let share = if wsum > 0.0 {
            phase.region_weights[r] / wsum
        } else {
            1.0 / populated.len() as f64
        };
        q[r] = ((budget * share).round() as usize).max(1).min(counts[r]);
    }
    q
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub prototypes: usize,
    /// Timestamps of the working entries dropped afterwards.
    pub dropped: Vec<usize>,
}

/// Consolidates working memory into prototypes using region quotas (explicit or derived
/// from the phase weights), then keeps only the newest `cfg.retain_after_consolidation`
/// working entries.
pub fn consolidate(
    store: &mut MemoryStore,
    phase: SurgicalPhase,
    cfg: &MemoryConfig,
    quotas: Option<[usize; 5]>,
) -> Result<ConsolidationReport> {
    if store.working.is_empty() {
        return Err(Error::InvalidState(
            "consolidation needs a non-empty working memory".into(),
        ));
    }
    let mut counts = [0usize; 5];
    for e in &store.working {
        counts[e.region.index()] += 1;
    }
    let quotas = quotas.unwrap_or_else(|| region_quotas(&counts, cfg.phase(phase), cfg.n_p));
    let vw = cfg.variant.uses_viewpoints().then_some(&cfg.viewpoint_weights);
    let mut added = 0;
    for region in AnatomicalRegion::ALL {
        let members: Vec<Pooled> = store
            .working
            .iter()
            .filter(|e| e.region == region)
            .map(WorkingEntry::pooled)
            .collect();
        let q = quotas[region.index()].min(members.len());
        if q == 0 {
            continue;
        }
        let keys: Vec<Key> = members.iter().map(|m| m.key).collect();
        let medoids = greedy_medoids(&keys, q);
        // each entry joins its nearest medoid (first medoid wins ties); medoids join themselves
        let assignment: Vec<usize> = (0..members.len())
            .map(|i| {
                if medoids.contains(&i) {
                    return i;
                }
                let mut best = medoids[0];
                for &o in &medoids[1..] {
                    if key_distance(&keys[i], &keys[o]) < key_distance(&keys[i], &keys[best]) {
                        best = o;
                    }
                }
                best
            })
            .collect();
        for &m in &medoids {
            let cluster: Vec<Pooled> = (0..members.len())
                .filter(|&i| assignment[i] == m)
                .map(|i| members[i])
                .collect();
            let pos = (0..members.len())
                .filter(|&i| assignment[i] == m)
                .position(|i| i == m)
                .expect("medoid belongs to its own cluster");
            let (k, v) = potentiate(&cluster, pos, &cfg.potentiation, vw)?;
            store.longterm.push(LongTermPrototype {
                key: unit(k),
                value: v,
                region,
                timestamp: members[m].timestamp,
                usage: 0,
                viewpoint: members[m].viewpoint,
            });
            added += 1;
        }
    }
    let keep = cfg.retain_after_consolidation.min(store.working.len());
    let cut = store.working.len() - keep;
    let dropped = store.working.drain(..cut).map(|e| e.timestamp).collect();
    Ok(ConsolidationReport {
        prototypes: added,
        dropped,
    })
}

/// Consolidates only when working memory is at capacity or `force` is set.
pub fn consolidate_if_needed(
    store: &mut MemoryStore,
    phase: SurgicalPhase,
    cfg: &MemoryConfig,
    force: bool,
) -> Result<Option<ConsolidationReport>> {
    if store.working.is_empty() || (!force && store.working.len() < cfg.t_max) {
        return Ok(None);
    }
    consolidate(store, phase, cfg, None).map(Some)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsertOutcome {
    pub inserted: bool,
    pub consolidation: Option<ConsolidationReport>,
    /// Timestamp dropped first-in-first-out (single-level memory).
    pub dropped_fifo: Option<usize>,
}

/// Inserts when `t mod r(phase) = 0`. At capacity the full memory consolidates first;
/// single-level memory drops its oldest entry; memory without a long-term tier grows.
pub fn working_insert(
    store: &mut MemoryStore,
    entry: WorkingEntry,
    phase: SurgicalPhase,
    cfg: &MemoryConfig,
) -> Result<InsertOutcome> {
    let t = entry.timestamp;
    let mut out = InsertOutcome::default();
    if !t.is_multiple_of(cfg.phase(phase).interval) {
        return Ok(out);
    }
    if let Some(last) = store.working.last() {
        if t <= last.timestamp {
            return Err(Error::invalid(format!(
                "working timestamps must increase: {t} after {}",
                last.timestamp
            )));
        }
    }
    if store.working.len() >= cfg.t_max {
        if cfg.variant.uses_longterm() {
            out.consolidation = Some(consolidate(store, phase, cfg, None)?);
        } else if !matches!(cfg.variant, super::config::Variant::NoLongterm) {
            out.dropped_fifo = Some(store.working.remove(0).timestamp);
        }
    }
    store.working.push(entry);
    out.inserted = true;
    Ok(out)
}

/// `R = exp(−δ·(now − t))·(1 + U)·I(A, S)`.
pub fn relevance(p: &LongTermPrototype, now: usize, phase: &PhaseConfig, decay: f64) -> f64 {
    let dt = now.saturating_sub(p.timestamp) as f64;
    (-decay * dt).exp() * (1.0 + p.usage as f64) * phase.importance_of(p.region)
}

/// Evicts minimum-relevance prototypes (ties → oldest, then lowest index) until at most
/// `l_max` remain. The last prototype of a region with maximal phase importance is
/// protected while any unprotected candidate exists. Returns the evicted prototypes.
pub fn evict_if_needed(
    longterm: &mut Vec<LongTermPrototype>,
    now: usize,
    phase: &PhaseConfig,
    decay: f64,
    l_max: usize,
) -> Vec<LongTermPrototype> {
    let max_importance = phase.importance.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut evicted = Vec::new();
    while longterm.len() > l_max {
        let mut counts = [0usize; 5];
        for p in longterm.iter() {
            counts[p.region.index()] += 1;
        }
        let protected =
            |p: &LongTermPrototype| counts[p.region.index()] == 1 && phase.importance_of(p.region) == max_importance;
        let any_unprotected = longterm.iter().any(|p| !protected(p));
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in longterm.iter().enumerate() {
            if any_unprotected && protected(p) {
                continue;
            }
            let r = relevance(p, now, phase, decay);
            let better = match best {
                None => true,
                Some((b, br)) => r < br || (r == br && p.timestamp < longterm[b].timestamp),
            };
            if better {
                best = Some((i, r));
            }
        }
        let (i, _) = best.expect("non-empty long-term memory");
        evicted.push(longterm.remove(i));
    }
    evicted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::config::Variant;

    fn vp(theta: f64) -> Viewpoint {
        Viewpoint::new(theta, 0.1, 3.0).unwrap()
    }

    fn pooled(key: Key, t: usize, phi: f64) -> Pooled {
        let mut value = [0.0; C_V];
        for (i, v) in value.iter_mut().enumerate() {
            *v = key[i % C_K] * 2.0 + i as f64;
        }
        Pooled {
            key,
            value,
            timestamp: t,
            viewpoint: vp(0.1 * t as f64),
            phi,
        }
    }

    fn key_from(seed: u64) -> Key {
        let mut k = [0.0; C_K];
        for (i, v) in k.iter_mut().enumerate() {
            *v = ((seed as f64 + 1.0) * (i as f64 + 0.7)).sin();
        }
        unit(k)
    }

    #[test]
    fn potentiate_single_neighbour_is_exact() {
        let p = pooled(key_from(3), 4, 0.6);
        let (k, v) = potentiate(
            &[p],
            0,
            &PotentiationWeights::default(),
            Some(&ViewpointWeights::default()),
        )
        .unwrap();
        assert_eq!((k, v), (p.key, p.value));
    }

    #[test]
    fn potentiate_equal_weights_is_mean() {
        let a = pooled(key_from(1), 10, 1.0);
        let mut b = pooled(key_from(1), 10, 1.0);
        b.value = b.value.map(|x| x + 3.0);
        let (_, v) = potentiate(&[a, b], 0, &PotentiationWeights::default(), None).unwrap();
        for i in 0..C_V {
            assert!((v[i] - (a.value[i] + b.value[i]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn potentiate_ignores_zero_quality() {
        let a = pooled(key_from(1), 10, 1.0);
        let b = pooled(key_from(5), 12, 0.0);
        let (k, v) = potentiate(&[a, b], 1, &PotentiationWeights::default(), None).unwrap();
        assert_eq!((k, v), (a.key, a.value));
        let dead = pooled(key_from(2), 3, 0.0);
        let (k, _) = potentiate(&[dead], 0, &PotentiationWeights::default(), None).unwrap();
        assert_eq!(k, dead.key);
    }

    fn exhaustive_medoid(keys: &[Key]) -> usize {
        let cost = |m: usize| keys.iter().map(|k| key_distance(k, &keys[m])).sum::<f64>();
        (0..keys.len()).fold(0, |b, m| if cost(m) < cost(b) { m } else { b })
    }

    #[test]
    fn greedy_single_medoid_matches_exhaustive() {
        for seed in 0..50u64 {
            let n = 1 + (seed as usize % 8);
            let keys: Vec<Key> = (0..n).map(|i| key_from(seed * 13 + i as u64)).collect();
            assert_eq!(greedy_medoids(&keys, 1), vec![exhaustive_medoid(&keys)]);
        }
    }

    #[test]
    fn quotas_follow_weights() {
        let phase = PhaseConfig {
            interval: 3,
            region_weights: [0.5, 0.1, 0.25, 0.05, 0.1],
            importance: [1.0; 5],
        };
        let q = region_quotas(&[10, 0, 10, 0, 0], &phase, 4);
        // budget 8 split 2:1 between notch and lateral
        assert_eq!(q, [5, 0, 3, 0, 0]);
        let q = region_quotas(&[1, 0, 10, 0, 0], &phase, 4);
        assert_eq!(q[0], 1);
        let q = region_quotas(&[0, 5, 0, 0, 0], &phase, 4);
        assert_eq!(q, [0, 4, 0, 0, 0]);
    }

    fn entry(t: usize, region: AnatomicalRegion, seed: u64) -> WorkingEntry {
        let keys = vec![key_from(seed), key_from(seed + 100)];
        let mut values = vec![[0.0; C_V]; 2];
        values[0][V_MASK] = 1.0;
        values[1][0] = seed as f64;
        WorkingEntry {
            features: FeatureMap {
                cols: 2,
                rows: 1,
                stride: 8,
                keys,
                values,
            },
            viewpoint: vp(0.0),
            timestamp: t,
            mask: Mask::new(16, 8),
            region,
            phi: 1.0,
        }
    }

    #[test]
    fn consolidation_respects_explicit_quotas() {
        let cfg = MemoryConfig {
            retain_after_consolidation: 1,
            ..MemoryConfig::default()
        };
        let mut store = MemoryStore::new();
        for t in 0..5 {
            let region = if t < 3 {
                AnatomicalRegion::LateralCondyle
            } else {
                AnatomicalRegion::MedialCondyle
            };
            store.working.push(entry(t * 3, region, t as u64));
        }
        let mut quotas = [0; 5];
        quotas[AnatomicalRegion::LateralCondyle.index()] = 2;
        quotas[AnatomicalRegion::MedialCondyle.index()] = 1;
        let rep = consolidate(&mut store, SurgicalPhase::Exploration, &cfg, Some(quotas)).unwrap();
        assert_eq!(rep.prototypes, 3);
        assert_eq!(store.longterm.len(), 3);
        let lateral = store
            .longterm
            .iter()
            .filter(|p| p.region == AnatomicalRegion::LateralCondyle)
            .count();
        assert_eq!(lateral, 2);
        assert_eq!(store.working.len(), 1);
        assert_eq!(rep.dropped, vec![0, 3, 6, 9]);
        assert!(store.longterm.iter().all(|p| (dot(&p.key, &p.key) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn single_entry_region_prototype_is_its_pooled_key() {
        let cfg = MemoryConfig::default();
        let mut store = MemoryStore::new();
        store.working.push(entry(0, AnatomicalRegion::PclOrigin, 9));
        consolidate(&mut store, SurgicalPhase::Drilling, &cfg, None).unwrap();
        assert_eq!(store.longterm.len(), 1);
        assert_eq!(store.longterm[0].key, key_from(9));
        assert!(consolidate(&mut MemoryStore::new(), SurgicalPhase::Drilling, &cfg, None).is_err());
    }

    #[test]
    fn interval_rule() {
        let cfg = MemoryConfig::default();
        let mut store = MemoryStore::new();
        for t in 0..10 {
            working_insert(
                &mut store,
                entry(t, AnatomicalRegion::LateralCondyle, 1),
                SurgicalPhase::Exploration,
                &cfg,
            )
            .unwrap();
        }
        let ts: Vec<usize> = store.working.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![0, 3, 6, 9]);
        let mut every = cfg.clone();
        every.phases[0].interval = 1;
        let mut store = MemoryStore::new();
        for t in 0..5 {
            working_insert(
                &mut store,
                entry(t, AnatomicalRegion::LateralCondyle, 1),
                SurgicalPhase::Exploration,
                &every,
            )
            .unwrap();
        }
        assert_eq!(store.working.len(), 5);
        assert!(working_insert(
            &mut store,
            entry(2, AnatomicalRegion::LateralCondyle, 1),
            SurgicalPhase::Exploration,
            &every
        )
        .is_err());
    }

    #[test]
    fn insertion_at_capacity_consolidates() {
        let cfg = MemoryConfig {
            t_max: 4,
            retain_after_consolidation: 2,
            ..MemoryConfig::default()
        };
        let mut store = MemoryStore::new();
        for i in 0..4 {
            working_insert(
                &mut store,
                entry(i * 3, AnatomicalRegion::LateralCondyle, i as u64),
                SurgicalPhase::Exploration,
                &cfg,
            )
            .unwrap();
        }
        assert!(store.longterm.is_empty());
        let out = working_insert(
            &mut store,
            entry(12, AnatomicalRegion::LateralCondyle, 7),
            SurgicalPhase::Exploration,
            &cfg,
        )
        .unwrap();
        assert!(out.consolidation.is_some());
        assert!(store.working.len() <= cfg.t_max);
        assert!(!store.longterm.is_empty());

        let fifo = MemoryConfig {
            variant: Variant::SingleLevel,
            ..cfg.clone()
        };
        let mut store = MemoryStore::new();
        for i in 0..6 {
            working_insert(
                &mut store,
                entry(i * 3, AnatomicalRegion::LateralCondyle, 1),
                SurgicalPhase::Exploration,
                &fifo,
            )
            .unwrap();
        }
        assert_eq!(store.working.len(), 4);
        assert_eq!(store.working[0].timestamp, 6);
        assert!(store.longterm.is_empty());

        let grow = MemoryConfig {
            variant: Variant::NoLongterm,
            ..cfg
        };
        let mut store = MemoryStore::new();
        for i in 0..6 {
            working_insert(
                &mut store,
                entry(i * 3, AnatomicalRegion::LateralCondyle, 1),
                SurgicalPhase::Exploration,
                &grow,
            )
            .unwrap();
        }
        assert_eq!(store.working.len(), 6);
    }

    fn proto(region: AnatomicalRegion, t: usize, usage: u64) -> LongTermPrototype {
        LongTermPrototype {
            key: key_from(t as u64),
            value: [0.0; C_V],
            region,
            timestamp: t,
            usage,
            viewpoint: vp(0.0),
        }
    }

    #[test]
    fn relevance_examples() {
        let flat = PhaseConfig {
            interval: 1,
            region_weights: [0.2; 5],
            importance: [1.0; 5],
        };
        let p = proto(AnatomicalRegion::LateralCondyle, 0, 0);
        assert_eq!(relevance(&p, 0, &flat, 0.01), 1.0);
        assert!((relevance(&p, 100, &flat, 0.01) - (-1.0f64).exp()).abs() < 1e-12);
        let used = proto(AnatomicalRegion::LateralCondyle, 0, 3);
        assert_eq!(relevance(&used, 500, &flat, 0.0), 4.0);
        assert!(relevance(&p, 10, &flat, 0.01) > relevance(&p, 11, &flat, 0.01));
    }

    #[test]
    fn eviction_order_and_protection() {
        // importance chosen so relevance = {0.9, 0.1, 0.5} at Δt = 0, U = 0
        let phase = PhaseConfig {
            interval: 1,
            region_weights: [0.2; 5],
            importance: [0.9, 0.1, 0.5, 0.05, 0.05],
        };
        let mut lt = vec![
            proto(AnatomicalRegion::IntercondylarNotch, 5, 0),
            proto(AnatomicalRegion::MedialCondyle, 5, 0),
            proto(AnatomicalRegion::LateralCondyle, 5, 0),
        ];
        let ev = evict_if_needed(&mut lt, 5, &phase, 0.0, 2);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].region, AnatomicalRegion::MedialCondyle);
        assert!(evict_if_needed(&mut lt, 5, &phase, 0.0, 2).is_empty());

        // the lone max-importance prototype is the least relevant (old) but survives
        let mut lt = vec![
            proto(AnatomicalRegion::IntercondylarNotch, 0, 0),
            proto(AnatomicalRegion::LateralCondyle, 99, 0),
            proto(AnatomicalRegion::LateralCondyle, 98, 0),
        ];
        let ev = evict_if_needed(
            &mut lt,
            100,
            &PhaseConfig {
                importance: [1.0, 0.3, 0.3, 0.3, 0.3],
                ..phase
            },
            0.5,
            2,
        );
        assert_eq!(ev[0].timestamp, 98);
        assert!(lt.iter().any(|p| p.region == AnatomicalRegion::IntercondylarNotch));
    }
}
