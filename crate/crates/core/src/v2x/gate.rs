use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::message::{MsgType, SafetyMessage};
use super::V2xError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupKeyKind {
    /// (msg_type, track_id)
    TrackId,
    /// (msg_type, plate_hash), falling back to track_id without a hash.
    PlateHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub max_rate_hz: f64,
    pub dedup_window_s: f64,
    pub dedup_key: DedupKeyKind,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { max_rate_hz: 10.0, dedup_window_s: 4.0, dedup_key: DedupKeyKind::TrackId }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), V2xError> {
        if !(self.max_rate_hz > 0.0 && self.max_rate_hz.is_finite()) {
            return Err(V2xError::InvalidConfig("max_rate_hz must be positive".into()));
        }
        if !(0.0..=60.0).contains(&self.dedup_window_s) {
            return Err(V2xError::InvalidConfig("dedup_window_s must lie in [0, 60]".into()));
        }
        Ok(())
    }

    /// (window µs, forwards allowed per window). Rates of 1 Hz and above use
    /// a 1 s window; slower rates allow one forward per period.
    fn rate_budget(&self) -> (i64, usize) {
        if self.max_rate_hz >= 1.0 {
            (1_000_000, self.max_rate_hz.floor() as usize)
        } else {
            ((1e6 / self.max_rate_hz).round() as i64, 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateDecision {
    Forward,
    DropDup,
    DropRate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum KeyId {
    Track(u64),
    Plate(String),
}

/// Dedup and rate-limit stage; single writer, `now` must not decrease.
#[derive(Debug, Clone)]
pub struct Gate {
    config: GateConfig,
    window_us: i64,
    budget: usize,
    last_forward: HashMap<(MsgType, KeyId), i64>,
    recent: VecDeque<i64>,
    now: i64,
}

impl Gate {
    pub fn new(config: GateConfig) -> Result<Self, V2xError> {
        config.validate()?;
        let (window_us, budget) = config.rate_budget();
        Ok(Self { config, window_us, budget, last_forward: HashMap::new(), recent: VecDeque::new(), now: i64::MIN })
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    fn key(&self, msg: &SafetyMessage) -> (MsgType, KeyId) {
        let id = match (&self.config.dedup_key, &msg.plate_hash) {
            (DedupKeyKind::PlateHash, Some(h)) => KeyId::Plate(h.clone()),
            _ => KeyId::Track(msg.track_id),
        };
        (msg.msg_type, id)
    }

    /// Duplicate test first, then the sliding-window rate test. Windows are
    /// half-open: a forward at `t` leaves the window at `t + 1 s`.
    pub fn check(&mut self, msg: &SafetyMessage, now_us: i64) -> GateDecision {
        debug_assert!(now_us >= self.now, "gate time went backwards");
        let now = now_us.max(self.now);
        self.now = now;
        let dedup_us = (self.config.dedup_window_s * 1e6).round() as i64;
        let key = self.key(msg);
        if let Some(&t) = self.last_forward.get(&key) {
            if now - t < dedup_us {
                return GateDecision::DropDup;
            }
        }
        while self.recent.front().is_some_and(|&t| now - t >= self.window_us) {
            self.recent.pop_front();
        }
        if self.recent.len() >= self.budget {
            return GateDecision::DropRate;
        }
        self.recent.push_back(now);
        self.last_forward.insert(key, now);
        if self.last_forward.len() > 4096 {
            self.last_forward.retain(|_, t| now - *t < dedup_us);
        }
        GateDecision::Forward
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::v2x::message::Severity;

    fn msg(track_id: u64) -> SafetyMessage {
        SafetyMessage {
            msg_type: MsgType::Speeding,
            severity: Severity::Warn,
            confidence: 1.0,
            t_utc: 0,
            lat: 0.0,
            lon: 0.0,
            heading: 0.0,
            speed: 90.0,
            track_id,
            plate_hash: None,
            cam_id: "c".into(),
            roi_id: "r".into(),
            evidence_uri: None,
        }
    }

    #[test]
    fn duplicate_inside_window_dropped() {
        let mut g = Gate::new(GateConfig::default()).unwrap();
        assert_eq!(g.check(&msg(1), 0), GateDecision::Forward);
        assert_eq!(g.check(&msg(1), 2_000_000), GateDecision::DropDup);
    }

    #[test]
    fn duplicate_outside_window_forwarded() {
        let mut g = Gate::new(GateConfig::default()).unwrap();
        assert_eq!(g.check(&msg(1), 0), GateDecision::Forward);
        assert_eq!(g.check(&msg(1), 5_000_000), GateDecision::Forward);
    }

    #[test]
    fn twenty_in_one_second_forwards_ten() {
        let mut g = Gate::new(GateConfig::default()).unwrap();
        let decisions: Vec<GateDecision> = (0..20).map(|i| g.check(&msg(i), i as i64 * 50_000)).collect();
        assert_eq!(decisions.iter().filter(|&&d| d == GateDecision::Forward).count(), 10);
        assert_eq!(decisions.iter().filter(|&&d| d == GateDecision::DropRate).count(), 10);
    }

    #[test]
    fn plate_key_spans_tracks() {
        let cfg = GateConfig { dedup_key: DedupKeyKind::PlateHash, ..GateConfig::default() };
        let mut g = Gate::new(cfg).unwrap();
        let mut a = msg(1);
        a.plate_hash = Some("ab".repeat(32));
        let mut b = msg(2);
        b.plate_hash = a.plate_hash.clone();
        assert_eq!(g.check(&a, 0), GateDecision::Forward);
        assert_eq!(g.check(&b, 1), GateDecision::DropDup);
        assert_eq!(g.check(&msg(3), 2), GateDecision::Forward);
    }

    #[test]
    fn sub_hertz_rate() {
        let cfg = GateConfig { max_rate_hz: 0.5, ..GateConfig::default() };
        let mut g = Gate::new(cfg).unwrap();
        assert_eq!(g.check(&msg(1), 0), GateDecision::Forward);
        assert_eq!(g.check(&msg(2), 1_999_999), GateDecision::DropRate);
        assert_eq!(g.check(&msg(3), 2_000_000), GateDecision::Forward);
    }
}
