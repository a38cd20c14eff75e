use serde::{Deserialize, Serialize};

use super::V2xError;
use crate::geom::Point;
use crate::plate::hash_plate;
use crate::violations::{ViolationClass, ViolationEvent};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgType {
    #[serde(rename = "VIOL_RL")]
    RedLight,
    #[serde(rename = "VIOL_SPD")]
    Speeding,
    #[serde(rename = "VIOL_WW")]
    WrongWay,
    #[serde(rename = "VIOL_UT")]
    UTurn,
    #[serde(rename = "VIOL_ZC")]
    ZebraCrossing,
}

impl MsgType {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::RedLight => "VIOL_RL",
            MsgType::Speeding => "VIOL_SPD",
            MsgType::WrongWay => "VIOL_WW",
            MsgType::UTurn => "VIOL_UT",
            MsgType::ZebraCrossing => "VIOL_ZC",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            MsgType::RedLight | MsgType::WrongWay => Severity::Critical,
            _ => Severity::Warn,
        }
    }
}

impl From<ViolationClass> for MsgType {
    fn from(c: ViolationClass) -> Self {
        match c {
            ViolationClass::SignalJump => MsgType::RedLight,
            ViolationClass::Speeding => MsgType::Speeding,
            ViolationClass::WrongWay => MsgType::WrongWay,
            ViolationClass::IllegalUturn => MsgType::UTurn,
            ViolationClass::ZebraBreach => MsgType::ZebraCrossing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

/// Cooperative safety payload. Carries a plate hash, never plate text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyMessage {
    pub msg_type: MsgType,
    pub severity: Severity,
    pub confidence: f64,
    /// UTC microseconds.
    pub t_utc: i64,
    pub lat: f64,
    pub lon: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub heading: f64,
    /// km/h.
    pub speed: f64,
    pub track_id: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plate_hash: Option<String>,
    pub cam_id: String,
    pub roi_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence_uri: Option<String>,
}

impl SafetyMessage {
    pub fn topic(&self) -> String {
        format!("its/violations/{}/{}", self.cam_id, self.msg_type.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Camera placement used to geolocate pixel positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub cam_id: String,
    /// WGS-84 position of `origin_px`.
    pub lat: f64,
    pub lon: f64,
    pub frame_dims: (u32, u32),
    pub px_per_m: f64,
    /// Pixel with known geo position; defaults to the bottom-center of the frame.
    pub origin_px: Option<Point>,
    /// Bearing of the image "up" direction, degrees clockwise from north.
    pub bearing_deg: f64,
    /// Prefix for evidence links; the event id is appended.
    pub evidence_base: Option<String>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            cam_id: "cam-01".into(),
            lat: 12.9716,
            lon: 77.5946,
            frame_dims: (640, 1200),
            px_per_m: 5.0,
            origin_px: None,
            bearing_deg: 0.0,
            evidence_base: None,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), V2xError> {
        if self.cam_id.is_empty()
            || !(self.px_per_m > 0.0)
            || !(-90.0..=90.0).contains(&self.lat)
            || !(-180.0..=180.0).contains(&self.lon)
        {
            return Err(V2xError::MissingGeoConfig);
        }
        Ok(())
    }

    fn origin(&self) -> Point {
        self.origin_px
            .unwrap_or(Point::new(f64::from(self.frame_dims.0) / 2.0, f64::from(self.frame_dims.1)))
    }

    /// Compass bearing of an image-plane direction.
    pub fn bearing_of(&self, dir_px: Point) -> f64 {
        if dir_px.norm() == 0.0 {
            return 0.0;
        }
        let b = self.bearing_deg + dir_px.x.atan2(-dir_px.y).to_degrees();
        let b = b.rem_euclid(360.0);
        if b >= 360.0 { 0.0 } else { b }
    }

    /// WGS-84 position of pixel `p` under a flat-ground, pure-scale model.
    pub fn geolocate(&self, p: Point) -> (f64, f64) {
        let d = (p - self.origin()) / self.px_per_m;
        let (right, up) = (d.x, -d.y);
        let th = self.bearing_deg.to_radians();
        let east = up * th.sin() + right * th.cos();
        let north = up * th.cos() - right * th.sin();
        let lat = (self.lat + (north / EARTH_RADIUS_M).to_degrees()).clamp(-90.0, 90.0);
        let coslat = self.lat.to_radians().cos().max(1e-9);
        let mut lon = self.lon + (east / (EARTH_RADIUS_M * coslat)).to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        (lat, lon)
    }
}

/// Vehicle motion at the time of the event, image plane.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotionHint {
    pub direction_px: Point,
    pub speed_kmh: f64,
}

fn roi_name(c: ViolationClass) -> &'static str {
    match c {
        ViolationClass::SignalJump => "stop_line",
        ViolationClass::ZebraBreach => "zebra",
        ViolationClass::WrongWay => "lane",
        ViolationClass::IllegalUturn => "divider_gap",
        ViolationClass::Speeding => "speed_trap",
    }
}

/// Maps an event to its wire payload, hashing the voted plate with `salt`.
pub fn to_safety_message(
    event: &ViolationEvent,
    geo: Option<&CameraConfig>,
    salt: &[u8],
    motion: MotionHint,
) -> Result<SafetyMessage, V2xError> {
    let geo = geo.ok_or(V2xError::MissingGeoConfig)?;
    geo.validate()?;
    let msg_type = MsgType::from(event.class);
    let (lat, lon) = geo.geolocate(event.location);
    let plate_hash = event.plate.as_deref().map(|p| hash_plate(p, salt)).transpose()?;
    Ok(SafetyMessage {
        msg_type,
        severity: msg_type.severity(),
        confidence: event.confidence.clamp(0.0, 1.0),
        t_utc: event.t_capture_us,
        lat,
        lon,
        heading: geo.bearing_of(motion.direction_px),
        speed: event.speed_kmh.unwrap_or(motion.speed_kmh).max(0.0),
        track_id: event.track_id,
        plate_hash,
        cam_id: geo.cam_id.clone(),
        roi_id: format!("{}/{}", geo.cam_id, roi_name(event.class)),
        evidence_uri: geo.evidence_base.as_ref().map(|b| format!("{b}/{}", event.event_id)),
    })
}
