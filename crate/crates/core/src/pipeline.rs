//! Parse -> detect -> report, and the per-frame curve table.

use std::io::{Read, Write};
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::detector::{run_stream, DetectorConfig, DetectorError, FrameResult};
use crate::stream::{read_stream, StreamError, StreamHeader};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub stream_id: String,
    pub frames_total: u64,
    pub frames_fall: u64,
    pub first_fall_index: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn from_results(stream_id: impl Into<String>, results: &[FrameResult]) -> Self {
        Self {
            stream_id: stream_id.into(),
            frames_total: results.len() as u64,
            frames_fall: results.iter().filter(|r| r.fall).count() as u64,
            first_fall_index: results.iter().find(|r| r.fall).map(|r| r.index),
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct StreamRun {
    pub header: StreamHeader,
    pub results: Vec<FrameResult>,
    pub report: RunReport,
}

pub fn process_stream<R: Read>(
    input: R,
    stream_id: &str,
    config: &DetectorConfig,
) -> Result<StreamRun, PipelineError> {
    let (header, frames) = read_stream(input)?;
    let results = run_stream(&frames, config)?;
    let report = RunReport::from_results(stream_id, &results);
    Ok(StreamRun {
        header,
        results,
        report,
    })
}

pub const CURVE_COLUMNS: [&str; 6] = [
    "frame",
    "head_angle_deg",
    "dist_ankle_px",
    "pct_change",
    "displacement_px",
    "fall",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub frame: u64,
    pub head_angle_deg: Option<f64>,
    pub dist_ankle_px: Option<f64>,
    pub pct_change: Option<f64>,
    pub displacement_px: Option<f64>,
    pub fall: bool,
}

/// Feature series per frame, in frame order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PipelineError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(CURVE_COLUMNS)?;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.rows {
            wtr.write_record([
                row.frame.to_string(),
                cell(row.head_angle_deg),
                cell(row.dist_ankle_px),
                cell(row.pct_change),
                cell(row.displacement_px),
                u8::from(row.fall).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

pub fn emit_curves(results: &[FrameResult]) -> CurveTable {
    CurveTable {
        rows: results
            .iter()
            .map(|r| CurveRow {
                frame: r.index,
                head_angle_deg: r.features.head_angle_deg,
                dist_ankle_px: r.features.dist_ankle_px,
                pct_change: r.features.pct_change,
                displacement_px: r.displacement_px,
                fall: r.fall,
            })
            .collect(),
    }
}
