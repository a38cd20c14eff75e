//! Automatic violation-zone derivation from static scene detections.
//!
//! Per-frame convex hulls of zebra, lane and divider detections are averaged
//! over a window of recent frames, then turned into the stop line, lane
//! direction, U-turn zones around the divider opening, speed lines and raster
//! masks. The result is frozen after commissioning.

mod average;
mod polygon;
mod raster;
mod zones;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use average::{resample, temporal_average, RESAMPLE_POINTS};
pub use polygon::{convex_hull, Polygon};
pub use raster::{rasterize, Mask};
pub use zones::{derive_zones, DividerZones, SpeedLines, ZoneSet, MIN_AXIS_RATIO};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoiError {
    #[error("fewer than three non-collinear points")]
    DegenerateInput,
    #[error("averaging window is empty")]
    EmptyWindow,
    #[error("calibration window has no static detections")]
    NoStaticFeatures,
    #[error("calibration window has no lane detections")]
    NoLaneFeatures,
    #[error("lane axis is ambiguous (eigenvalue ratio {0:.3})")]
    AmbiguousLaneAxis(f64),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid zone set: {0}")]
    InvalidZones(String),
    #[error("invalid roi config: {0}")]
    InvalidConfig(String),
    #[error("zone set json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiConfig {
    /// Frames per hull average.
    pub averaging_window: usize,
    pub raster_cell_px: u32,
    pub calibration_frames: usize,
    /// Surveyed distance between the speed lines, meters.
    pub speed_distance_m: f64,
    /// Speed-line positions as fractions of the lane extent.
    pub speed_anchors: [f64; 2],
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            averaging_window: 30,
            raster_cell_px: 4,
            calibration_frames: 300,
            speed_distance_m: 100.0,
            speed_anchors: [0.25, 0.75],
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<(), RoiError> {
        let bad = |m: &str| Err(RoiError::InvalidConfig(m.to_string()));
        if self.averaging_window == 0 {
            return bad("averaging_window must be at least 1");
        }
        if self.raster_cell_px == 0 {
            return bad("raster_cell_px must be at least 1");
        }
        if !(self.speed_distance_m > 0.0) {
            return bad("speed_distance_m must be positive");
        }
        let [a0, a1] = self.speed_anchors;
        if !(0.0 <= a0 && a0 < a1 && a1 <= 1.0) {
            return bad("speed_anchors must satisfy 0 <= start < stop <= 1");
        }
        Ok(())
    }
}
