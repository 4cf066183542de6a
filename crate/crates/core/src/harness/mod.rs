//! Synthetic benchmark harness: scripted sequences with ground truth, degradations,
//! tracking drivers and evaluation.

pub mod benchmark;
pub mod eval;
pub mod scene;
pub mod sequence;
pub mod track;

pub use benchmark::{standard_script, OCCLUSION_BURST, STANDARD_FRAMES, STANDARD_SEEDS};
pub use eval::{boundary_distance, evaluate, frame_metrics, Aggregate, EvalReport, FrameMetrics, FAILURE_IOU};
pub use scene::{default_camera, synthetic_condyle, world_up, CapParams};
pub use sequence::{
    apply_degradation, frame_path, generate_sequence, mask_path, occluder_rect, read_truth, viewpoint_of,
    DegradationEvent, DegradationSpec, FrameTruth, PhaseMark, SequenceDir, SequenceGenerator, SequenceManifest,
    SequenceScript, SyntheticFrame, TrajectoryKnot,
};
pub use track::{
    first_mask, read_masks, run_ablation, track_source, write_masks, AblationRow, AblationTable, FrameSource, InitMask,
    TrackOptions, TrackRun, TrackSummary,
};
