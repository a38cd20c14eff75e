use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::BBox;
use crate::violations::ViolationClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalPhase {
    Red,
    Amber,
    Green,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectClass {
    Vehicle,
    TwoWheeler,
    Pedestrian,
    ZebraCrossing,
    Lane,
    Divider,
    LicensePlate,
}

impl ObjectClass {
    /// Classes the tracker follows.
    pub fn is_vehicle(self) -> bool {
        matches!(self, ObjectClass::Vehicle | ObjectClass::TwoWheeler)
    }

    /// Classes the zone derivation consumes.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ObjectClass::ZebraCrossing | ObjectClass::Lane | ObjectClass::Divider
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateReading {
    pub text: String,
    pub confidence: f64,
}

impl PlateReading {
    pub fn new(text: impl Into<String>, confidence: f64) -> Self {
        Self {
            text: text.into(),
            confidence,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.text.is_empty()
            && self.text.len() <= 12
            && self
                .text
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
            && (0.0..=1.0).contains(&self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
    pub embedding: Option<Vec<f64>>,
    pub plate_reading: Option<PlateReading>,
}

impl Detection {
    pub fn new(class: ObjectClass, bbox: BBox, confidence: f64) -> Self {
        Self {
            class,
            bbox,
            confidence,
            embedding: None,
            plate_reading: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_plate(mut self, reading: PlateReading) -> Self {
        self.plate_reading = Some(reading);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_index: u64,
    /// Wall-clock capture time, microseconds since the Unix epoch.
    pub t_capture_us: i64,
    /// Monotonic capture time, microseconds.
    pub t_mono_us: i64,
    pub signal_phase: SignalPhase,
    pub detections: Vec<Detection>,
}

impl DetectionFrame {
    pub fn new(frame_index: u64, t_capture_us: i64, t_mono_us: i64) -> Self {
        Self {
            frame_index,
            t_capture_us,
            t_mono_us,
            signal_phase: SignalPhase::None,
            detections: Vec::new(),
        }
    }
}

/// One scripted violation with the frame span in which it happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "class")]
    pub class: ViolationClass,
    pub label: String,
    pub span: [u64; 2],
    pub speed_kmh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames: Vec<DetectionFrame>,
    pub frame_rate: f64,
    /// (width, height) in pixels.
    pub frame_dims: (u32, u32),
    pub ground_truth: Vec<GroundTruth>,
    /// True plate per vehicle label, when the scenario was synthesized.
    pub plates: BTreeMap<String, String>,
}

impl Scenario {
    pub fn new(frame_rate: f64, frame_dims: (u32, u32)) -> Self {
        Self {
            frames: Vec::new(),
            frame_rate,
            frame_dims,
            ground_truth: Vec::new(),
            plates: BTreeMap::new(),
        }
    }

    /// Seconds per frame.
    pub fn frame_interval_s(&self) -> f64 {
        1.0 / self.frame_rate
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::new(30.0, (0, 0))
    }
}
