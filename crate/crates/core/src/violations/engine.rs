use std::collections::{BTreeMap, BTreeSet};

use super::predicates::{last_crossing, mean_velocity, observed_since};
use super::{speed_kmh, SpeedMeasurement, ViolationClass, ViolationConfig, ViolationError, ViolationEvent};
use crate::geom::{angle_between_deg, Point};
use crate::roi::ZoneSet;
use crate::trace::{DetectionFrame, SignalPhase};
use crate::tracker::Track;

const ZONE_A: usize = 0;
const ZONE_B: usize = 1;
const ZONE_C: usize = 2;

#[derive(Debug, Clone, Copy)]
struct PendingUturn {
    completed_at: u64,
    entry_velocity: Point,
}

#[derive(Debug, Clone, Default)]
struct TrackMemo {
    fired: BTreeSet<ViolationClass>,
    wrong_way_run: u32,
    last_zone: Option<usize>,
    zone_entries: Vec<(usize, u64)>,
    uturn: Option<PendingUturn>,
    speed_start: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOutput {
    pub events: Vec<ViolationEvent>,
    pub speeds: Vec<SpeedMeasurement>,
}

struct Finding {
    class: ViolationClass,
    confidence: f64,
    speed_kmh: Option<f64>,
}

/// Per-stream violation state machine; feed it every frame after the tracker.
#[derive(Debug, Clone)]
pub struct ViolationEngine {
    config: ViolationConfig,
    frame_interval_s: f64,
    next_event_id: u64,
    memos: BTreeMap<u64, TrackMemo>,
}

impl ViolationEngine {
    pub fn new(config: ViolationConfig, frame_rate: f64) -> Result<Self, ViolationError> {
        config.validate()?;
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(ViolationError::InvalidFrameRate);
        }
        Ok(Self { config, frame_interval_s: 1.0 / frame_rate, next_event_id: 1, memos: BTreeMap::new() })
    }

    pub fn config(&self) -> &ViolationConfig {
        &self.config
    }

    /// Drops per-track state, including a start-line crossing still waiting
    /// for its stop line.
    pub fn forget(&mut self, track_id: u64) {
        self.memos.remove(&track_id);
    }

    /// Evaluates every confirmed track observed on `frame`.
    pub fn process(&mut self, frame: &DetectionFrame, tracks: &[Track], zones: &ZoneSet) -> FrameOutput {
        let mut out = FrameOutput::default();
        let mut ordered: Vec<&Track> = tracks.iter().filter(|t| t.is_confirmed()).collect();
        ordered.sort_by_key(|t| t.track_id);
        for track in ordered {
            let Some(last) = track.last_entry() else { continue };
            if !last.observed || last.frame_index != frame.frame_index {
                continue;
            }
            let point = last.point;
            let mut memo = self.memos.remove(&track.track_id).unwrap_or_default();
            let mut findings = Vec::new();
            findings.extend(self.signal_jump(track, zones, frame, &memo));
            findings.extend(self.zebra_breach(track, zones, frame, &memo));
            findings.extend(self.wrong_way(track, zones, frame, &mut memo));
            findings.extend(self.uturn(track, zones, frame, &mut memo));
            if let Some((m, f)) = self.speed(track, zones, frame, &mut memo) {
                out.speeds.push(m);
                findings.extend(f);
            }
            for f in findings {
                if f.class != ViolationClass::Speeding && !memo.fired.insert(f.class) {
                    continue;
                }
                out.events.push(ViolationEvent {
                    event_id: self.next_event_id,
                    class: f.class,
                    track_id: track.track_id,
                    frame_index: frame.frame_index,
                    t_capture_us: frame.t_capture_us,
                    t_mono_us: frame.t_mono_us,
                    confidence: f.confidence.clamp(0.0, 1.0),
                    speed_kmh: f.speed_kmh,
                    location: point,
                    plate: None,
                });
                self.next_event_id += 1;
            }
            self.memos.insert(track.track_id, memo);
        }
        out
    }

    fn mean_confidence(&self, track: &Track, frame: u64) -> f64 {
        let recent = observed_since(track, frame.saturating_sub(self.config.wrong_way_window));
        if recent.is_empty() {
            return 0.0;
        }
        recent.iter().map(|h| h.confidence).sum::<f64>() / recent.len() as f64
    }

    fn signal_jump(&self, track: &Track, zones: &ZoneSet, frame: &DetectionFrame, memo: &TrackMemo) -> Option<Finding> {
        if frame.signal_phase != SignalPhase::Red || memo.fired.contains(&ViolationClass::SignalJump) {
            return None;
        }
        let line = zones.stop_line.as_ref()?;
        let c = last_crossing(track, line)?;
        c.is_along(zones.lane_vector).then(|| Finding {
            class: ViolationClass::SignalJump,
            confidence: self.mean_confidence(track, frame.frame_index),
            speed_kmh: None,
        })
    }

    fn zebra_breach(&self, track: &Track, zones: &ZoneSet, frame: &DetectionFrame, memo: &TrackMemo) -> Option<Finding> {
        if frame.signal_phase != SignalPhase::Red || memo.fired.contains(&ViolationClass::ZebraBreach) {
            return None;
        }
        let zebra = zones.zebra.as_ref()?;
        let now = frame.frame_index;
        let since = now.checked_sub(self.config.hold_frames)?;
        if track.history.first()?.frame_index > since {
            return None;
        }
        let recent = observed_since(track, since);
        let current = recent.last()?.point;
        let halted = recent.len() >= 2
            && recent.iter().all(|h| zebra.contains(h.point) && h.point.dist(current) < self.config.stop_eps_px);
        halted.then(|| Finding {
            class: ViolationClass::ZebraBreach,
            confidence: self.mean_confidence(track, now),
            speed_kmh: None,
        })
    }

    fn wrong_way(&self, track: &Track, zones: &ZoneSet, frame: &DetectionFrame, memo: &mut TrackMemo) -> Option<Finding> {
        let now = frame.frame_index;
        let point = track.last_entry()?.point;
        let w = self.config.wrong_way_window;
        let v = mean_velocity(track, now, w);
        let against = zones.in_lane(point)
            && v.is_some_and(|v| v.dot(zones.lane_vector) < 0.0 && v.norm() > self.config.min_motion_px);
        memo.wrong_way_run = if against { memo.wrong_way_run + 1 } else { 0 };
        if memo.wrong_way_run < self.config.persist_frames || memo.fired.contains(&ViolationClass::WrongWay) {
            return None;
        }
        let steps = observed_since(track, now.saturating_sub(w));
        let total = steps.len().saturating_sub(1);
        let opposing = steps
            .windows(2)
            .filter(|p| (p[1].point - p[0].point).dot(zones.lane_vector) < 0.0)
            .count();
        let confidence = if total > 0 { opposing as f64 / total as f64 } else { 0.0 };
        Some(Finding { class: ViolationClass::WrongWay, confidence, speed_kmh: None })
    }

    fn uturn(&self, track: &Track, zones: &ZoneSet, frame: &DetectionFrame, memo: &mut TrackMemo) -> Option<Finding> {
        let dz = zones.divider_zones.as_ref()?;
        let now = frame.frame_index;
        let point = track.last_entry()?.point;
        let window_frames = (self.config.uturn_window_s / self.frame_interval_s).round() as u64;
        let w = self.config.wrong_way_window;

        let zone = dz.as_array().iter().position(|z| z.contains(point));
        if let Some(z) = zone.filter(|_| zone != memo.last_zone) {
            memo.zone_entries.push((z, now));
            if memo.zone_entries.len() > 3 {
                memo.zone_entries.remove(0);
            }
            if let [(z0, f0), (z1, _), (z2, f2)] = memo.zone_entries[..] {
                let ordered = (z0, z1, z2) == (ZONE_A, ZONE_B, ZONE_C) || (z0, z1, z2) == (ZONE_C, ZONE_B, ZONE_A);
                if ordered && f2 - f0 <= window_frames {
                    if let Some(entry_velocity) = mean_velocity(track, f0, w) {
                        memo.uturn = Some(PendingUturn { completed_at: f2, entry_velocity });
                    }
                }
            }
        }
        memo.last_zone = zone;

        let pending = memo.uturn?;
        if now - pending.completed_at > window_frames {
            memo.uturn = None;
            return None;
        }
        if memo.fired.contains(&ViolationClass::IllegalUturn) {
            return None;
        }
        let exit = mean_velocity(track, now, w)?;
        let turn = angle_between_deg(pending.entry_velocity, exit)?;
        (turn >= self.config.uturn_min_heading_deg).then(|| {
            memo.uturn = None;
            Finding {
                class: ViolationClass::IllegalUturn,
                confidence: self.mean_confidence(track, now),
                speed_kmh: None,
            }
        })
    }

    fn speed(
        &self,
        track: &Track,
        zones: &ZoneSet,
        frame: &DetectionFrame,
        memo: &mut TrackMemo,
    ) -> Option<(SpeedMeasurement, Option<Finding>)> {
        let lines = zones.speed_lines.as_ref()?;
        let now = frame.frame_index;
        if last_crossing(track, &lines.start).is_some_and(|c| c.is_along(zones.lane_vector)) {
            memo.speed_start = Some(now);
        }
        let start = memo.speed_start?;
        let c = last_crossing(track, &lines.stop)?;
        if !c.is_along(zones.lane_vector) || now <= start {
            return None;
        }
        memo.speed_start = None;
        let frames = now - start;
        let v = speed_kmh(lines.distance_m, frames, self.frame_interval_s);
        let m = SpeedMeasurement {
            track_id: track.track_id,
            start_frame: start,
            stop_frame: now,
            frames,
            frame_interval_s: self.frame_interval_s,
            distance_m: lines.distance_m,
            speed_kmh: v,
        };
        let finding = (v > self.config.speed_limit_kmh).then(|| Finding {
            class: ViolationClass::Speeding,
            confidence: self.mean_confidence(track, now),
            speed_kmh: Some(v),
        });
        Some((m, finding))
    }
}
