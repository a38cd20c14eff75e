//! Violation reasoning over confirmed tracks and the frozen zone set.
//!
//! Five classes are detected: signal jump, zebra breach, wrong-way travel,
//! illegal U-turn and speeding. Every predicate reads the bottom-center
//! reference point of observed (not coasted) track history.

mod engine;
mod eval;
mod predicates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{ViolationEngine, FrameOutput};
pub use eval::{evaluate, ClassMetrics, EvalConfig, EvalReport};
pub use predicates::{crossed_line, last_crossing, Crossing, Side};

use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationClass {
    SignalJump,
    ZebraBreach,
    WrongWay,
    IllegalUturn,
    Speeding,
}

impl ViolationClass {
    pub const ALL: [ViolationClass; 5] = [
        ViolationClass::SignalJump,
        ViolationClass::ZebraBreach,
        ViolationClass::WrongWay,
        ViolationClass::IllegalUturn,
        ViolationClass::Speeding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationClass::SignalJump => "SIGNAL_JUMP",
            ViolationClass::ZebraBreach => "ZEBRA_BREACH",
            ViolationClass::WrongWay => "WRONG_WAY",
            ViolationClass::IllegalUturn => "ILLEGAL_UTURN",
            ViolationClass::Speeding => "SPEEDING",
        }
    }
}

impl std::fmt::Display for ViolationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One confirmed violation, as written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub event_id: u64,
    pub class: ViolationClass,
    pub track_id: u64,
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "t_utc_us")]
    pub t_capture_us: i64,
    /// Monotonic trace time of the frame on which the predicate fired.
    pub t_mono_us: i64,
    #[serde(rename = "conf")]
    pub confidence: f64,
    /// Present only on SPEEDING events.
    pub speed_kmh: Option<f64>,
    #[serde(rename = "loc")]
    pub location: Point,
    /// Voted plate, kept on the device.
    pub plate: Option<String>,
}

/// One start/stop line traversal, whether or not it was a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMeasurement {
    pub track_id: u64,
    pub start_frame: u64,
    pub stop_frame: u64,
    /// `stop_frame - start_frame`.
    pub frames: u64,
    pub frame_interval_s: f64,
    pub distance_m: f64,
    pub speed_kmh: f64,
}

/// Speed from the frame count between the two lines: `3.6 d / (N T_F)` km/h.
pub fn speed_kmh(distance_m: f64, frames: u64, frame_interval_s: f64) -> f64 {
    3.6 * distance_m / (frames as f64 * frame_interval_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViolationConfig {
    pub speed_limit_kmh: f64,
    /// Frames in the wrong-way displacement window.
    pub wrong_way_window: u64,
    /// Minimum mean speed, px/frame, for the wrong-way test.
    pub min_motion_px: f64,
    pub persist_frames: u32,
    pub uturn_window_s: f64,
    pub uturn_min_heading_deg: f64,
    /// Maximum displacement, px, over `hold_frames` that counts as halted.
    pub stop_eps_px: f64,
    pub hold_frames: u64,
}

impl Default for ViolationConfig {
    fn default() -> Self {
        Self {
            speed_limit_kmh: 60.0,
            wrong_way_window: 10,
            min_motion_px: 1.0,
            persist_frames: 15,
            uturn_window_s: 6.0,
            uturn_min_heading_deg: 135.0,
            stop_eps_px: 3.0,
            hold_frames: 15,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ViolationError {
    #[error("invalid violation config: {0}")]
    InvalidConfig(String),
    #[error("frame rate must be positive")]
    InvalidFrameRate,
}

impl ViolationConfig {
    pub fn validate(&self) -> Result<(), ViolationError> {
        let bad = |m: &str| Err(ViolationError::InvalidConfig(m.to_string()));
        if !(self.speed_limit_kmh > 0.0) {
            return bad("speed_limit_kmh must be positive");
        }
        if self.wrong_way_window == 0 || self.hold_frames == 0 {
            return bad("windows must be at least one frame");
        }
        if !(self.uturn_window_s > 0.0) {
            return bad("uturn_window_s must be positive");
        }
        if !(0.0..=180.0).contains(&self.uturn_min_heading_deg) {
            return bad("uturn_min_heading_deg must lie in [0, 180]");
        }
        if self.min_motion_px < 0.0 || self.stop_eps_px < 0.0 {
            return bad("motion thresholds must be non-negative");
        }
        Ok(())
    }
}
