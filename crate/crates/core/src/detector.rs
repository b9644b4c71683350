//! Threshold fall detector.
//!
//! The first frame with a usable nose calibrates the detector: that nose
//! becomes the initial head position for the rest of the stream. Every later
//! frame is flagged as a fall when the nose has moved strictly more than
//! `threshold_px` away from it. Calibration happens once per stream and is
//! never reset.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    head_angle, head_displacement, neck_point, nose_ankle_distance, percentage_change,
    FeatureValues, Point,
};
use crate::stream::{KeypointId, PoseFrame};

pub const DEFAULT_THRESHOLD_PX: f64 = 95.0;
pub const DEFAULT_VISIBILITY_MIN: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("frame {got} is out of order (last stepped frame {previous})")]
    OutOfOrderFrame { previous: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub threshold_px: f64,
    pub visibility_min: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_px: DEFAULT_THRESHOLD_PX,
            visibility_min: DEFAULT_VISIBILITY_MIN,
        }
    }
}

impl DetectorConfig {
    pub fn with_threshold(threshold_px: f64) -> Self {
        Self {
            threshold_px,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.threshold_px.is_finite() && self.threshold_px > 0.0) {
            return Err(DetectorError::InvalidConfig(format!(
                "threshold_px must be positive, got {}",
                self.threshold_px
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility_min) {
            return Err(DetectorError::InvalidConfig(format!(
                "visibility_min must lie in [0, 1], got {}",
                self.visibility_min
            )));
        }
        Ok(())
    }
}

/// Calibration anchors. All absent until the first usable nose is seen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectorState {
    pub initial_head: Option<Point>,
    pub d_initial: Option<f64>,
    pub calibration_frame: Option<u64>,
}

impl DetectorState {
    pub fn is_calibrated(&self) -> bool {
        self.initial_head.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Annotation {
    /// Red box, BGR (0, 0, 255).
    RedFall,
    /// Green box, BGR (0, 255, 0).
    GreenNoFall,
}

impl Annotation {
    pub fn for_flag(fall: bool) -> Self {
        if fall {
            Annotation::RedFall
        } else {
            Annotation::GreenNoFall
        }
    }

    pub fn bgr(self) -> [u8; 3] {
        match self {
            Annotation::RedFall => [0, 0, 255],
            Annotation::GreenNoFall => [0, 255, 0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Annotation::RedFall => "Fall",
            Annotation::GreenNoFall => "No Fall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub index: u64,
    pub fall: bool,
    pub displacement_px: Option<f64>,
    pub features: FeatureValues,
    pub annotation: Annotation,
}

impl FrameResult {
    fn no_pose(index: u64) -> Self {
        Self {
            index,
            fall: false,
            displacement_px: None,
            features: FeatureValues::default(),
            annotation: Annotation::GreenNoFall,
        }
    }
}

/// Per-stream detector: a config, the calibration state, and the ordering
/// guard. Create one per stream.
#[derive(Debug, Clone)]
pub struct FallDetector {
    config: DetectorConfig,
    state: DetectorState,
    last_index: Option<u64>,
}

impl FallDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        Ok(Self {
            config,
            state: DetectorState::default(),
            last_index: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn step(&mut self, frame: &PoseFrame) -> Result<FrameResult, DetectorError> {
        if let Some(previous) = self.last_index {
            if frame.index <= previous {
                return Err(DetectorError::OutOfOrderFrame {
                    previous,
                    got: frame.index,
                });
            }
        }
        self.last_index = Some(frame.index);

        let vis = self.config.visibility_min;
        let Some(nose) = frame.usable(KeypointId::NOSE, vis) else {
            return Ok(FrameResult::no_pose(frame.index));
        };

        let head_angle_deg = neck_point(frame, vis).and_then(|neck| head_angle(nose, neck).ok());
        let dist_ankle_px = frame
            .usable(KeypointId::LEFT_ANKLE, vis)
            .map(|ankle| nose_ankle_distance(nose, ankle));

        let Some(initial) = self.state.initial_head else {
            self.state.initial_head = Some(nose);
            self.state.calibration_frame = Some(frame.index);
            self.state.d_initial = dist_ankle_px.filter(|d| *d > 0.0);
            return Ok(FrameResult {
                index: frame.index,
                fall: false,
                displacement_px: Some(0.0),
                features: FeatureValues {
                    head_angle_deg,
                    dist_ankle_px,
                    pct_change: None,
                },
                annotation: Annotation::GreenNoFall,
            });
        };

        let displacement = head_displacement(initial, nose);
        let fall = displacement > self.config.threshold_px;

        let pct_change = match (self.state.d_initial, dist_ankle_px) {
            (Some(base), Some(d)) => percentage_change(d, base).ok(),
            (None, Some(d)) if d > 0.0 => {
                // Deferred baseline: this frame becomes the reference.
                self.state.d_initial = Some(d);
                None
            }
            _ => None,
        };

        Ok(FrameResult {
            index: frame.index,
            fall,
            displacement_px: Some(displacement),
            features: FeatureValues {
                head_angle_deg,
                dist_ankle_px,
                pct_change,
            },
            annotation: Annotation::for_flag(fall),
        })
    }
}

pub fn run_stream(
    frames: &[PoseFrame],
    config: &DetectorConfig,
) -> Result<Vec<FrameResult>, DetectorError> {
    let mut detector = FallDetector::new(*config)?;
    frames.iter().map(|f| detector.step(f)).collect()
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("line {line}: malformed result record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct ResultRecord {
    index: u64,
    fall: bool,
    displacement_px: Option<f64>,
    head_angle_deg: Option<f64>,
    dist_ankle_px: Option<f64>,
    pct_change: Option<f64>,
    annotation: Annotation,
}

impl From<&FrameResult> for ResultRecord {
    fn from(r: &FrameResult) -> Self {
        Self {
            index: r.index,
            fall: r.fall,
            displacement_px: r.displacement_px,
            head_angle_deg: r.features.head_angle_deg,
            dist_ankle_px: r.features.dist_ankle_px,
            pct_change: r.features.pct_change,
            annotation: r.annotation,
        }
    }
}

/// Writes one JSON object per frame; absent values become `null`.
pub fn write_results<W: Write>(mut writer: W, results: &[FrameResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut writer, &ResultRecord::from(r))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<FrameResult>, ResultsError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| ResultsError::Malformed { line: i + 1, reason };
        let rec: ResultRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if rec.annotation != Annotation::for_flag(rec.fall) {
            return Err(malformed(format!(
                "annotation {:?} contradicts fall={}",
                rec.annotation, rec.fall
            )));
        }
        out.push(FrameResult {
            index: rec.index,
            fall: rec.fall,
            displacement_px: rec.displacement_px,
            features: FeatureValues {
                head_angle_deg: rec.head_angle_deg,
                dist_ankle_px: rec.dist_ankle_px,
                pct_change: rec.pct_change,
            },
            annotation: rec.annotation,
        });
    }
    Ok(out)
}
