//! Landmark stream data model and its JSON Lines file format.
//!
//! A stream file is UTF-8 text with one JSON record per line. The first
//! record is a header describing the frame geometry; every following record
//! is one frame carrying either 33 `[x, y, visibility]` triples in pixel
//! coordinates or `null` when the upstream estimator found no pose:
//!
//! ```text
//! {"type":"header","width":640,"height":480,"fps":30.0,"source":"cam0"}
//! {"type":"frame","index":0,"landmarks":[[320.5,120.25,0.99], ...]}
//! {"type":"frame","index":1,"landmarks":null}
//! ```
//!
//! Frame indices start anywhere but must then increase by exactly one per
//! record. Missing detections are explicit `null` frames, never gaps.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

/// Number of landmarks in the pose topology.
pub const LANDMARK_COUNT: usize = 33;

const KEYPOINT_NAMES: [&str; LANDMARK_COUNT] = [
    "nose",
    "left_eye_inner",
    "left_eye",
    "left_eye_outer",
    "right_eye_inner",
    "right_eye",
    "right_eye_outer",
    "left_ear",
    "right_ear",
    "mouth_left",
    "mouth_right",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_pinky",
    "right_pinky",
    "left_index",
    "right_index",
    "left_thumb",
    "right_thumb",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_heel",
    "right_heel",
    "left_foot_index",
    "right_foot_index",
];

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing header: the first record must be a header record")]
    MissingHeader,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Index into the 33-point pose topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeypointId(u8);

impl KeypointId {
    pub const NOSE: Self = Self(0);
    pub const LEFT_EYE: Self = Self(2);
    pub const RIGHT_EYE: Self = Self(5);
    pub const LEFT_EAR: Self = Self(7);
    pub const RIGHT_EAR: Self = Self(8);
    pub const LEFT_SHOULDER: Self = Self(11);
    pub const RIGHT_SHOULDER: Self = Self(12);
    pub const LEFT_ELBOW: Self = Self(13);
    pub const RIGHT_ELBOW: Self = Self(14);
    pub const LEFT_WRIST: Self = Self(15);
    pub const RIGHT_WRIST: Self = Self(16);
    pub const LEFT_HIP: Self = Self(23);
    pub const RIGHT_HIP: Self = Self(24);
    pub const LEFT_KNEE: Self = Self(25);
    pub const RIGHT_KNEE: Self = Self(26);
    pub const LEFT_ANKLE: Self = Self(27);
    pub const RIGHT_ANKLE: Self = Self(28);

    pub fn new(index: usize) -> Option<Self> {
        (index < LANDMARK_COUNT).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        KEYPOINT_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = KeypointId> {
        (0..LANDMARK_COUNT as u8).map(KeypointId)
    }
}

impl fmt::Display for KeypointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.0)
    }
}

/// One 2D landmark in pixel coordinates (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LandmarkPoint {
    pub x: f64,
    pub y: f64,
    pub visibility: f64,
}

impl LandmarkPoint {
    pub fn new(x: f64, y: f64, visibility: f64) -> Self {
        Self { x, y, visibility }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    fn check(&self) -> Result<(), String> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(format!("non-finite coordinate ({}, {})", self.x, self.y));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(format!("visibility {} outside [0, 1]", self.visibility));
        }
        Ok(())
    }
}

pub type Landmarks = [LandmarkPoint; LANDMARK_COUNT];

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub source: String,
}

impl StreamHeader {
    pub fn new(width: u32, height: u32, fps: f64, source: impl Into<String>) -> Self {
        Self {
            width,
            height,
            fps,
            source: source.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err(format!(
                "frame size {}x{} must be positive",
                self.width, self.height
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(format!("fps {} must be a positive number", self.fps));
        }
        Ok(())
    }
}

impl Default for StreamHeader {
    fn default() -> Self {
        Self::new(640, 480, 30.0, "")
    }
}

/// One video frame's pose, or `None` landmarks when no pose was detected.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub index: u64,
    pub landmarks: Option<Box<Landmarks>>,
}

impl PoseFrame {
    pub fn new(index: u64, landmarks: Landmarks) -> Self {
        Self {
            index,
            landmarks: Some(Box::new(landmarks)),
        }
    }

    pub fn missing(index: u64) -> Self {
        Self {
            index,
            landmarks: None,
        }
    }

    pub fn has_pose(&self) -> bool {
        self.landmarks.is_some()
    }

    pub fn landmark(&self, id: KeypointId) -> Option<&LandmarkPoint> {
        self.landmarks.as_deref().map(|lm| &lm[id.index()])
    }

    /// Position of `id` when the pose is present and the landmark's
    /// visibility reaches `visibility_min`.
    pub fn usable(&self, id: KeypointId, visibility_min: f64) -> Option<Point> {
        self.landmark(id)
            .filter(|lm| lm.visibility >= visibility_min)
            .map(LandmarkPoint::position)
    }

    fn check(&self) -> Result<(), String> {
        if let Some(landmarks) = &self.landmarks {
            for (i, lm) in landmarks.iter().enumerate() {
                lm.check()
                    .map_err(|e| format!("frame {} landmark {i}: {e}", self.index))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Header {
        width: u32,
        height: u32,
        fps: f64,
        source: String,
    },
    Frame {
        index: u64,
        landmarks: Option<Vec<[f64; 3]>>,
    },
}

/// Incremental reader: parses the header eagerly, then yields one frame per
/// call to `next`. Iteration stops at end of input.
pub struct StreamReader<R> {
    lines: std::io::Lines<R>,
    header: StreamHeader,
    line_no: usize,
    last_index: Option<u64>,
    failed: bool,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Result<Self, StreamError> {
        let mut lines = reader.lines();
        let mut line_no = 0;
        let header = loop {
            let Some(line) = lines.next() else {
                return Err(StreamError::MissingHeader);
            };
            let line = line?;
            line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match decode(&line, line_no)? {
                Record::Header {
                    width,
                    height,
                    fps,
                    source,
                } => {
                    let header = StreamHeader {
                        width,
                        height,
                        fps,
                        source,
                    };
                    header.validate().map_err(|reason| StreamError::MalformedRecord {
                        line: line_no,
                        reason,
                    })?;
                    break header;
                }
                Record::Frame { .. } => return Err(StreamError::MissingHeader),
            }
        };
        Ok(Self {
            lines,
            header,
            line_no,
            last_index: None,
            failed: false,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn next_frame(&mut self) -> Option<Result<PoseFrame, StreamError>> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.frame_from_line(&line));
        }
    }

    fn frame_from_line(&mut self, line: &str) -> Result<PoseFrame, StreamError> {
        let line_no = self.line_no;
        let malformed = |reason: String| StreamError::MalformedRecord {
            line: line_no,
            reason,
        };
        let (index, raw) = match decode(line, line_no)? {
            Record::Frame { index, landmarks } => (index, landmarks),
            Record::Header { .. } => return Err(malformed("unexpected second header".into())),
        };
        if let Some(prev) = self.last_index {
            if index <= prev {
                return Err(malformed(format!(
                    "frame index {index} does not increase (previous {prev})"
                )));
            }
            if index != prev + 1 {
                return Err(malformed(format!(
                    "frame index gap: {index} follows {prev}"
                )));
            }
        }
        let landmarks = match raw {
            None => None,
            Some(points) => {
                if points.len() != LANDMARK_COUNT {
                    return Err(malformed(format!(
                        "expected {LANDMARK_COUNT} landmarks, found {}",
                        points.len()
                    )));
                }
                let mut lm = Box::new([LandmarkPoint::default(); LANDMARK_COUNT]);
                for (slot, [x, y, v]) in lm.iter_mut().zip(points) {
                    *slot = LandmarkPoint::new(x, y, v);
                }
                Some(lm)
            }
        };
        let frame = PoseFrame { index, landmarks };
        frame.check().map_err(malformed)?;
        self.last_index = Some(index);
        Ok(frame)
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<PoseFrame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_frame();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

fn decode(line: &str, line_no: usize) -> Result<Record, StreamError> {
    serde_json::from_str(line).map_err(|e| StreamError::MalformedRecord {
        line: line_no,
        reason: e.to_string(),
    })
}

/// Parses a complete stream held in memory.
pub fn parse_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<PoseFrame>), StreamError> {
    read_stream(bytes)
}

pub fn read_stream<R: Read>(reader: R) -> Result<(StreamHeader, Vec<PoseFrame>), StreamError> {
    let reader = StreamReader::new(BufReader::new(reader))?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

/// Checks the invariants `write_stream` relies on.
pub fn validate_frames(header: &StreamHeader, frames: &[PoseFrame]) -> Result<(), StreamError> {
    header.validate().map_err(StreamError::InvariantViolation)?;
    for pair in frames.windows(2) {
        if pair[1].index != pair[0].index + 1 {
            return Err(StreamError::InvariantViolation(format!(
                "frame index {} does not directly follow {}",
                pair[1].index, pair[0].index
            )));
        }
    }
    for frame in frames {
        frame.check().map_err(StreamError::InvariantViolation)?;
    }
    Ok(())
}

pub fn write_stream_to<W: Write>(
    mut writer: W,
    header: &StreamHeader,
    frames: &[PoseFrame],
) -> Result<(), StreamError> {
    validate_frames(header, frames)?;
    let record = Record::Header {
        width: header.width,
        height: header.height,
        fps: header.fps,
        source: header.source.clone(),
    };
    write_record(&mut writer, &record)?;
    for frame in frames {
        let record = Record::Frame {
            index: frame.index,
            landmarks: frame
                .landmarks
                .as_deref()
                .map(|lm| lm.iter().map(|p| [p.x, p.y, p.visibility]).collect()),
        };
        write_record(&mut writer, &record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Serializes a stream to bytes. Numbers use the shortest decimal form that
/// reads back to the identical `f64`.
pub fn write_stream(header: &StreamHeader, frames: &[PoseFrame]) -> Result<Vec<u8>, StreamError> {
    let mut out = Vec::new();
    write_stream_to(&mut out, header, frames)?;
    Ok(out)
}

fn write_record<W: Write>(writer: &mut W, record: &Record) -> Result<(), StreamError> {
    serde_json::to_writer(&mut *writer, record).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standing(index: u64) -> PoseFrame {
        let mut lm = [LandmarkPoint::new(0.0, 0.0, 1.0); LANDMARK_COUNT];
        for (i, p) in lm.iter_mut().enumerate() {
            p.x = 300.0 + i as f64 * 0.5;
            p.y = 100.0 + i as f64 * 8.25;
        }
        PoseFrame::new(index, lm)
    }

    #[test]
    fn named_indices() {
        assert_eq!(KeypointId::NOSE.index(), 0);
        assert_eq!(KeypointId::LEFT_SHOULDER.index(), 11);
        assert_eq!(KeypointId::RIGHT_SHOULDER.index(), 12);
        assert_eq!(KeypointId::LEFT_ANKLE.index(), 27);
        assert_eq!(KeypointId::LEFT_ANKLE.name(), "left_ankle");
        assert_eq!(KeypointId::new(32).map(KeypointId::index), Some(32));
        assert!(KeypointId::new(33).is_none());
        assert_eq!(KeypointId::all().count(), 33);
    }

    #[test]
    fn header_only_stream() {
        let text = br#"{"type":"header","width":640,"height":480,"fps":30.0,"source":"x"}"#;
        let (header, frames) = parse_stream(text).unwrap();
        assert_eq!(header, StreamHeader::new(640, 480, 30.0, "x"));
        assert!(frames.is_empty());
    }

    #[test]
    fn header_bytes_match_format() {
        let bytes = write_stream(&StreamHeader::new(640, 480, 30.0, "cam"), &[]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"type\":\"header\",\"width\":640,\"height\":480,\"fps\":30.0,\"source\":\"cam\"}\n"
        );
    }

    #[test]
    fn null_landmarks_record() {
        let bytes = write_stream(&StreamHeader::default(), &[PoseFrame::missing(5)]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let second = text.lines().nth(1).unwrap();
        assert_eq!(second, r#"{"type":"frame","index":5,"landmarks":null}"#);
        let (_, frames) = parse_stream(text.as_bytes()).unwrap();
        assert_eq!(frames, vec![PoseFrame::missing(5)]);
    }

    #[test]
    fn one_full_frame() {
        let header = StreamHeader::default();
        let frames = vec![standing(0)];
        let bytes = write_stream(&header, &frames).unwrap();
        let (h, f) = parse_stream(&bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(f.len(), 1);
        assert!(f[0].has_pose());
        assert_eq!(f, frames);
    }

    #[test]
    fn rejects_wrong_landmark_count() {
        let text = "{\"type\":\"header\",\"width\":640,\"height\":480,\"fps\":30.0,\"source\":\"\"}\n\
                    {\"type\":\"frame\",\"index\":0,\"landmarks\":[[1.0,2.0,1.0]]}\n";
        match parse_stream(text.as_bytes()) {
            Err(StreamError::MalformedRecord { line: 2, reason }) => {
                assert!(reason.contains("33"), "{reason}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_monotonic_and_gaps() {
        let header = StreamHeader::default();
        let good = String::from_utf8(write_stream(&header, &[standing(3)]).unwrap()).unwrap();
        let repeat = format!("{good}{{\"type\":\"frame\",\"index\":3,\"landmarks\":null}}\n");
        assert!(matches!(
            parse_stream(repeat.as_bytes()),
            Err(StreamError::MalformedRecord { line: 3, .. })
        ));
        let gap = format!("{good}{{\"type\":\"frame\",\"index\":5,\"landmarks\":null}}\n");
        assert!(matches!(
            parse_stream(gap.as_bytes()),
            Err(StreamError::MalformedRecord { line: 3, .. })
        ));
    }

    #[test]
    fn missing_header() {
        assert!(matches!(parse_stream(b""), Err(StreamError::MissingHeader)));
        let text = br#"{"type":"frame","index":0,"landmarks":null}"#;
        assert!(matches!(parse_stream(text), Err(StreamError::MissingHeader)));
    }

    #[test]
    fn rejects_bad_syntax_and_header_values() {
        assert!(matches!(
            parse_stream(b"{not json"),
            Err(StreamError::MalformedRecord { line: 1, .. })
        ));
        let zero = br#"{"type":"header","width":0,"height":480,"fps":30.0,"source":""}"#;
        assert!(matches!(
            parse_stream(zero),
            Err(StreamError::MalformedRecord { line: 1, .. })
        ));
        let text = "{\"type\":\"header\",\"width\":640,\"height\":480,\"fps\":30.0,\"source\":\"\"}\n\
                    {\"type\":\"header\",\"width\":640,\"height\":480,\"fps\":30.0,\"source\":\"\"}\n";
        assert!(matches!(
            parse_stream(text.as_bytes()),
            Err(StreamError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_visibility_out_of_range() {
        let mut frame = standing(0);
        frame.landmarks.as_mut().unwrap()[4].visibility = 1.5;
        assert!(matches!(
            write_stream(&StreamHeader::default(), &[frame.clone()]),
            Err(StreamError::InvariantViolation(_))
        ));
        let mut bytes = write_stream(&StreamHeader::default(), &[]).unwrap();
        let mut body = String::from("{\"type\":\"frame\",\"index\":0,\"landmarks\":[");
        let triples: Vec<String> = (0..33)
            .map(|i| if i == 4 { "[1,2,1.5]".into() } else { "[1,2,1]".into() })
            .collect();
        body.push_str(&triples.join(","));
        body.push_str("]}\n");
        bytes.extend_from_slice(body.as_bytes());
        assert!(matches!(
            parse_stream(&bytes),
            Err(StreamError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn write_rejects_index_gaps() {
        let frames = vec![standing(0), standing(2)];
        assert!(matches!(
            write_stream(&StreamHeader::default(), &frames),
            Err(StreamError::InvariantViolation(_))
        ));
    }

    #[test]
    fn usable_respects_visibility() {
        let mut frame = standing(0);
        frame.landmarks.as_mut().unwrap()[0].visibility = 0.4;
        assert!(frame.usable(KeypointId::NOSE, 0.5).is_none());
        assert!(frame.usable(KeypointId::NOSE, 0.4).is_some());
        assert!(PoseFrame::missing(0).usable(KeypointId::NOSE, 0.0).is_none());
    }

    #[test]
    fn reader_stops_after_error() {
        let text = "{\"type\":\"header\",\"width\":640,\"height\":480,\"fps\":30.0,\"source\":\"\"}\n\
                    garbage\n\
                    {\"type\":\"frame\",\"index\":0,\"landmarks\":null}\n";
        let mut reader = StreamReader::new(text.as_bytes()).unwrap();
        assert!(reader.next().unwrap().is_err());
        assert!(reader.next().is_none());
    }
}
