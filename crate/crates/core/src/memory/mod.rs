//! Hierarchical memory tracker: sensory state, working entries and long-term prototypes.

pub mod config;
pub mod features;
pub mod read;
pub mod sensory;
pub mod session;
pub mod store;

pub use config::{
    viewpoint_distance, FusionWeights, MemoryConfig, PhaseConfig, SimTable, SurgicalPhase, Variant, Viewpoint,
    ViewpointWeights,
};
pub use features::{extract_features, quality_factor, FeatureMap};
pub use read::{fuse_decode, read_longterm, read_working, refine_boundary};
pub use sensory::{read_sensory, GruWeights, SensoryState};
pub use session::{
    audit_interval_law, FrameDiagnostics, FrameOutput, MemoryEvent, SkipReason, StoreSnapshot, TrackingSession,
};
pub use store::{LongTermPrototype, MemoryStore, WorkingEntry};
