//! Detection traces: the data model, the JSON Lines file format and the
//! synthetic scenario generator used for evaluation.

mod generate;
mod io;
mod model;
pub mod suite;

use std::path::PathBuf;

use thiserror::Error;

pub use generate::{
    corrupt_plate, generate_scenario, reading_confidence, HoldSpec, NoiseSpec, PhaseChange,
    ScenarioSpec, StaticFeature, VehicleSpec, OCR_CONFUSIONS,
};
pub use io::{gt_sidecar_path, plates_sidecar_path, read_trace, validate_frame, write_trace, TRACE_FORMAT};
pub use model::{
    Detection, DetectionFrame, GroundTruth, ObjectClass, PlateReading, Scenario, SignalPhase,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("malformed record at line {0}: {1}")]
    MalformedRecord(usize, String),
    #[error("non-monotonic time at frame {0}")]
    NonMonotonicTime(u64),
    #[error("bounding box out of frame bounds at frame {0}")]
    BBoxOutOfBounds(u64),
    #[error("invalid detection at frame {frame_index}: {reason}")]
    InvalidDetection { frame_index: u64, reason: String },
    #[error("ground-truth span of {0} lies outside the trace")]
    SpanOutsideTrace(String),
    #[error("infeasible script: {0}")]
    InfeasibleScript(String),
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
}
