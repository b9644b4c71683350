//! Fall detection over 2D pose-landmark streams.
//!
//! A landmark stream ([`stream`]) holds 33 keypoints per video frame. The
//! [`detector`] calibrates on the first usable nose position and flags a
//! frame as a fall once the nose has moved more than a pixel threshold away
//! from it, while [`geometry`] computes the per-frame head angle,
//! nose-to-ankle distance and its percentage change. [`eval`] scores the
//! output against ground truth, and [`synth`] generates labelled test
//! streams from a registry of named motion patterns.

pub mod detector;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod stream;
pub mod synth;

pub use detector::{
    run_stream, Annotation, DetectorConfig, DetectorError, DetectorState, FallDetector, FrameResult,
};
pub use eval::{confuse, metrics, ConfusionMatrix, GroundTruthLabels, Level, Metrics, MetricsReport};
pub use geometry::{FeatureValues, Point};
pub use pipeline::{emit_curves, process_stream, CurveTable, RunReport};
pub use stream::{parse_stream, write_stream, KeypointId, LandmarkPoint, PoseFrame, StreamHeader};
pub use synth::{perturb, synthesize, PatternRegistry, PerturbSpec, SynthSpec};
