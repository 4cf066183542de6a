use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomicalRegion;
use crate::error::{Error, Result};

/// Arthroscope viewpoint relative to the condyle: azimuth, elevation (radians) and distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub theta: f64,
    pub phi: f64,
    pub d: f64,
}

impl Viewpoint {
    pub fn new(theta: f64, phi: f64, d: f64) -> Result<Self> {
        let v = Viewpoint {
            theta: wrap_angle(theta),
            phi,
            d,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > -PI && self.theta <= PI) {
            return Err(Error::invalid(format!("azimuth {} outside (-pi, pi]", self.theta)));
        }
        if !(self.phi.abs() <= PI / 2.0) {
            return Err(Error::invalid(format!("elevation {} outside [-pi/2, pi/2]", self.phi)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("viewpoint distance must be positive"));
        }
        Ok(())
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointWeights {
    pub theta: f64,
    pub phi: f64,
    pub d: f64,
    /// Distance normalizer for the `d` term.
    pub d_ref: f64,
}

impl Default for ViewpointWeights {
    fn default() -> Self {
        ViewpointWeights {
            theta: 1.0,
            phi: 1.0,
            d: 1.0,
            d_ref: 1.0,
        }
    }
}

pub fn viewpoint_distance(a: &Viewpoint, b: &Viewpoint, w: &ViewpointWeights) -> f64 {
    // from |Δθ| so that the distance is exactly symmetric
    let dt = (a.theta - b.theta).abs().rem_euclid(2.0 * PI);
    let dt = dt.min(2.0 * PI - dt);
    let dp = a.phi - b.phi;
    let dd = (a.d - b.d) / w.d_ref;
    (w.theta * dt * dt + w.phi * dp * dp + w.d * dd * dd).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgicalPhase {
    Exploration,
    TunnelPositioning,
    Drilling,
}

impl SurgicalPhase {
    pub const ALL: [SurgicalPhase; 3] = [
        SurgicalPhase::Exploration,
        SurgicalPhase::TunnelPositioning,
        SurgicalPhase::Drilling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SurgicalPhase::Exploration => "exploration",
            SurgicalPhase::TunnelPositioning => "tunnel_positioning",
            SurgicalPhase::Drilling => "drilling",
        }
    }
}

impl std::fmt::Display for SurgicalPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SurgicalPhase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SurgicalPhase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown surgical phase '{s}'")))
    }
}

/// Per-phase working interval, consolidation weights ω_r and forgetting importance I(A, S).
/// Region arrays follow `AnatomicalRegion::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub interval: usize,
    pub region_weights: [f64; 5],
    pub importance: [f64; 5],
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::invalid("working interval must be at least 1"));
        }
        if self.region_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("region weights must be non-negative"));
        }
        if (self.region_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("region weights must sum to 1"));
        }
        if self.importance.iter().any(|i| !(0.0..=1.0).contains(i)) {
            return Err(Error::invalid("importance values must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn weight(&self, r: AnatomicalRegion) -> f64 {
        self.region_weights[r.index()]
    }

    pub fn importance_of(&self, r: AnatomicalRegion) -> f64 {
        self.importance[r.index()]
    }
}

/// Symmetric region-similarity table used to weight long-term prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTable(pub [[f64; 5]; 5]);

impl Default for SimTable {
    /// 1 on the diagonal, 0.5 for anatomically adjacent pairs, 0 otherwise.
    fn default() -> Self {
        use AnatomicalRegion::*;
        let mut t = [[0.0; 5]; 5];
        for (i, row) in t.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (a, b) in [
            (IntercondylarNotch, MedialCondyle),
            (IntercondylarNotch, LateralCondyle),
            (LateralCondyle, SupracondylarArea),
            (MedialCondyle, SupracondylarArea),
            (IntercondylarNotch, PclOrigin),
        ] {
            t[a.index()][b.index()] = 0.5;
            t[b.index()][a.index()] = 0.5;
        }
        SimTable(t)
    }
}

impl SimTable {
    pub fn get(&self, a: AnatomicalRegion, b: AnatomicalRegion) -> f64 {
        self.0[a.index()][b.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..5 {
            for j in 0..5 {
                if self.0[i][j] != self.0[j][i] || !self.0[i][j].is_finite() {
                    return Err(Error::invalid("similarity table must be finite and symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// Memory-component switches for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// No long-term tier: working memory grows without consolidation.
    NoLongterm,
    NoSensory,
    /// Viewpoint distance forced to 0 everywhere.
    FixedSimilarity,
    /// Working memory only, first-in-first-out, no viewpoint weighting.
    SingleLevel,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoLongterm,
        Variant::NoSensory,
        Variant::FixedSimilarity,
        Variant::SingleLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLongterm => "no_longterm",
            Variant::NoSensory => "no_sensory",
            Variant::FixedSimilarity => "fixed_similarity",
            Variant::SingleLevel => "single_level",
        }
    }

    pub fn uses_sensory(self) -> bool {
        !matches!(self, Variant::NoSensory | Variant::SingleLevel)
    }

    pub fn uses_longterm(self) -> bool {
        !matches!(self, Variant::NoLongterm | Variant::SingleLevel)
    }

    pub fn uses_viewpoints(self) -> bool {
        !matches!(self, Variant::FixedSimilarity | Variant::SingleLevel)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub sensory: f64,
    pub working: f64,
    pub longterm: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            sensory: 0.2,
            working: 0.55,
            longterm: 0.25,
        }
    }
}

/// Weights of the potentiation kernel `exp(−α·D − β·|Δt| − γ·D_V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentiationWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for PotentiationWeights {
    fn default() -> Self {
        PotentiationWeights {
            alpha: 2.0,
            beta: 0.01,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub variant: Variant,
    /// Feature-grid stride in pixels.
    pub stride: usize,
    pub c_h: usize,
    pub seed: u64,
    pub t_max: usize,
    pub l_max: usize,
    /// Base prototype quota per populated region at consolidation.
    pub n_p: usize,
    /// Newest working entries kept after a consolidation.
    pub retain_after_consolidation: usize,
    pub decay: f64,
    pub potentiation: PotentiationWeights,
    pub viewpoint_weights: ViewpointWeights,
    pub phi_min: f64,
    /// Mask-area drop (fraction of the previous area) treated as occlusion.
    pub occlusion_area_drop: f64,
    /// Consecutive area-drop fallbacks after which the decoded mask is accepted anyway.
    pub max_hold_frames: usize,
    /// Normalizer of the mean squared Laplacian in the quality factor.
    pub sharpness_ref: f64,
    pub top_k: usize,
    /// Spatial search radius (cells) of working-memory reads.
    pub read_radius: usize,
    /// Only the newest entries up to this many are scanned by working reads.
    pub read_entries: usize,
    /// Inverse temperature on key dot products.
    pub key_temperature: f64,
    pub sim_temperature: f64,
    /// Width of the appearance kernel behind long-term votes.
    pub appearance_sigma: f64,
    pub fusion: FusionWeights,
    /// Pixel-level boundary refinement after cell decoding.
    pub refine_boundary: bool,
    pub sim_table: SimTable,
    pub default_region: crate::anatomy::AnatomicalRegion,
    pub phases: [PhaseConfig; 3],
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            variant: Variant::Full,
            stride: 8,
            c_h: super::features::C_K,
            seed: 7,
            t_max: 64,
            l_max: 256,
            n_p: 4,
            retain_after_consolidation: 16,
            decay: 0.005,
            potentiation: PotentiationWeights::default(),
            viewpoint_weights: ViewpointWeights::default(),
            phi_min: 0.15,
            occlusion_area_drop: 0.2,
            max_hold_frames: 60,
            sharpness_ref: 2e-3,
            top_k: 8,
            read_radius: 2,
            read_entries: 64,
            key_temperature: 10.0,
            sim_temperature: 1.0,
            appearance_sigma: 0.25,
            fusion: FusionWeights::default(),
            refine_boundary: true,
            sim_table: SimTable::default(),
            default_region: AnatomicalRegion::LateralCondyle,
            phases: [
                PhaseConfig {
                    interval: 3,
                    region_weights: [0.2; 5],
                    importance: [0.8, 0.6, 0.8, 0.5, 0.6],
                },
                PhaseConfig {
                    interval: 5,
                    region_weights: [0.35, 0.1, 0.3, 0.1, 0.15],
                    importance: [1.0, 0.5, 0.9, 0.4, 0.8],
                },
                PhaseConfig {
                    interval: 10,
                    region_weights: [0.4, 0.05, 0.3, 0.05, 0.2],
                    importance: [1.0, 0.3, 0.9, 0.3, 0.7],
                },
            ],
        }
    }
}

impl MemoryConfig {
    pub fn with_variant(variant: Variant) -> Self {
        MemoryConfig {
            variant,
            ..MemoryConfig::default()
        }
    }

    pub fn phase(&self, p: SurgicalPhase) -> &PhaseConfig {
        &self.phases[p.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.c_h == 0 {
            return Err(Error::invalid("stride and hidden size must be positive"));
        }
        if self.t_max == 0 || self.l_max == 0 || self.n_p == 0 || self.top_k == 0 || self.read_entries == 0 {
            return Err(Error::invalid("capacities, quotas and top_k must be positive"));
        }
        if self.retain_after_consolidation >= self.t_max {
            return Err(Error::invalid("retained window must be smaller than T_max"));
        }
        if !(self.decay >= 0.0)
            || !(0.0..=1.0).contains(&self.phi_min)
            || !(0.0..=1.0).contains(&self.occlusion_area_drop)
        {
            return Err(Error::invalid(
                "decay must be >= 0; phi_min and occlusion drop in [0, 1]",
            ));
        }
        if !(self.sharpness_ref > 0.0 && self.appearance_sigma > 0.0) {
            return Err(Error::invalid(
                "sharpness reference and appearance sigma must be positive",
            ));
        }
        let f = &self.fusion;
        if [f.sensory, f.working, f.longterm].iter().any(|w| !(*w >= 0.0)) || f.sensory + f.working + f.longterm <= 0.0
        {
            return Err(Error::invalid("fusion weights must be non-negative and not all zero"));
        }
        self.sim_table.validate()?;
        for p in &self.phases {
            p.validate()?;
        }
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: MemoryConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}
