//! Frame- and video-level scoring of detector output against ground truth.
//!
//! Ground truth is a CSV file with header `stream_id,level,frame,label`.
//! `FRAME` rows carry a frame ordinal; `VIDEO` rows leave `frame` empty and
//! label the whole stream. Labels are `1`/`0` (also `true`/`false`).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::FrameResult;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground-truth label for frame {0}")]
    MissingLabel(u64),
    #[error("no results to evaluate")]
    EmptyResults,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ground truth: {0}")]
    InvalidTruth(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Frame,
    Video,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frame" => Ok(Level::Frame),
            "video" => Ok(Level::Video),
            other => Err(format!("unknown level {other:?} (expected frame or video)")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Frame => "FRAME",
            Level::Video => "VIDEO",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Frame(BTreeMap<u64, bool>),
    Video(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabels {
    pub stream_id: String,
    pub labels: Labels,
}

impl GroundTruthLabels {
    pub fn frames(stream_id: impl Into<String>, labels: impl IntoIterator<Item = (u64, bool)>) -> Self {
        Self {
            stream_id: stream_id.into(),
            labels: Labels::Frame(labels.into_iter().collect()),
        }
    }

    pub fn video(stream_id: impl Into<String>, fall: bool) -> Self {
        Self {
            stream_id: stream_id.into(),
            labels: Labels::Video(fall),
        }
    }

    pub fn level(&self) -> Level {
        match self.labels {
            Labels::Frame(_) => Level::Frame,
            Labels::Video(_) => Level::Video,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.tn += rhs.tn;
        self.fn_ += rhs.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when there are no positive units.
    pub sensitivity: Option<f64>,
    /// `None` when there are no negative units.
    pub specificity: Option<f64>,
}

/// Tallies predictions against labels.
///
/// At frame level every result must have a label; labels for frames that
/// have no result are ignored. At video level the stream is predicted as a
/// fall when any frame was flagged, and contributes a single unit.
pub fn confuse(results: &[FrameResult], truth: &GroundTruthLabels) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::default();
    match &truth.labels {
        Labels::Frame(labels) => {
            for r in results {
                let actual = *labels.get(&r.index).ok_or(EvalError::MissingLabel(r.index))?;
                cm.record(r.fall, actual);
            }
        }
        Labels::Video(actual) => {
            if results.is_empty() {
                return Err(EvalError::EmptyResults);
            }
            cm.record(results.iter().any(|r| r.fall), *actual);
        }
    }
    Ok(cm)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
    })
}

/// Single-line metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stream_id: String,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

impl MetricsReport {
    pub fn new(stream_id: impl Into<String>, cm: &ConfusionMatrix) -> Result<Self, EvalError> {
        let m = metrics(cm)?;
        Ok(Self {
            stream_id: stream_id.into(),
            tp: cm.tp,
            fp: cm.fp,
            tn: cm.tn,
            fn_: cm.fn_,
            accuracy: m.accuracy,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics report serializes")
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TruthRow {
    stream_id: String,
    level: String,
    frame: Option<u64>,
    label: String,
}

fn parse_label(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads a ground-truth CSV. Rows are grouped by `(stream_id, level)` in
/// order of first appearance.
pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthLabels>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["stream_id", "level", "frame", "label"];
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(EvalError::InvalidTruth(format!(
            "header must be {:?}, found {:?}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out: Vec<GroundTruthLabels> = Vec::new();
    for (i, row) in rdr.deserialize::<TruthRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |msg: String| EvalError::InvalidTruth(format!("line {line}: {msg}"));
        let level: Level = row.level.parse().map_err(bad)?;
        let label = parse_label(&row.label)
            .ok_or_else(|| bad(format!("label {:?} is not 0/1", row.label)))?;
        let slot = out
            .iter_mut()
            .find(|g| g.stream_id == row.stream_id && g.level() == level);
        match (level, row.frame) {
            (Level::Frame, Some(frame)) => match slot {
                Some(GroundTruthLabels {
                    labels: Labels::Frame(map),
                    ..
                }) => {
                    if map.insert(frame, label).is_some() {
                        return Err(bad(format!("duplicate label for frame {frame}")));
                    }
                }
                _ => out.push(GroundTruthLabels::frames(row.stream_id, [(frame, label)])),
            },
            (Level::Frame, None) => return Err(bad("FRAME row without a frame number".into())),
            (Level::Video, Some(_)) => return Err(bad("VIDEO row must leave frame empty".into())),
            (Level::Video, None) => {
                if slot.is_some() {
                    return Err(bad(format!("duplicate VIDEO label for {}", row.stream_id)));
                }
                out.push(GroundTruthLabels::video(row.stream_id, label));
            }
        }
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(writer: W, truth: &[GroundTruthLabels]) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for t in truth {
        match &t.labels {
            Labels::Frame(map) => {
                for (&frame, &fall) in map {
                    wtr.serialize(TruthRow {
                        stream_id: t.stream_id.clone(),
                        level: Level::Frame.to_string(),
                        frame: Some(frame),
                        label: u8::from(fall).to_string(),
                    })?;
                }
            }
            Labels::Video(fall) => wtr.serialize(TruthRow {
                stream_id: t.stream_id.clone(),
                level: Level::Video.to_string(),
                frame: None,
                label: u8::from(*fall).to_string(),
            })?,
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
