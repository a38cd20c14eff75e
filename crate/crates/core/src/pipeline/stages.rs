//! The five per-frame stages. Each owns its state and is driven in frame
//! order, either inline or from its own thread.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GateCounts, PipelineConfig, PipelineError};
use crate::geom::Point;
use crate::plate::{vote, PlateBallot, PlateConfig};
use crate::roi::{derive_zones, RoiConfig, ZoneSet};
use crate::trace::{validate_frame, DetectionFrame, ObjectClass};
use crate::tracker::{PlateEvidence, Track, Tracker};
use crate::v2x::{
    publish, to_safety_message, CameraConfig, DelaySampler, Gate, GateDecision, LatencySample, MotionHint,
    PublishOutcome, RetryPolicy, SimBroker, Transport,
};
use crate::v2x::DeadLetter;
use crate::violations::{SpeedMeasurement, ViolationEngine, ViolationEvent};

pub const STAGE_NAMES: [&str; 5] = ["ingest", "track", "violations", "plate", "v2x"];

/// Where the zone set in force came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZonesSource {
    Pinned,
    Derived,
    /// The trace ended inside the calibration window.
    Unavailable,
}

pub struct IngestStage {
    dims: (u32, u32),
    realtime: bool,
    anchor: Option<(Instant, i64)>,
}

impl IngestStage {
    pub fn new(dims: (u32, u32), realtime: bool) -> Self {
        Self { dims, realtime, anchor: None }
    }

    pub fn process(&mut self, frame: DetectionFrame) -> Result<DetectionFrame, PipelineError> {
        validate_frame(&frame, self.dims)?;
        if self.realtime {
            let (start, t0) = *self.anchor.get_or_insert((Instant::now(), frame.t_mono_us));
            let due = start + Duration::from_micros((frame.t_mono_us - t0).max(0) as u64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        Ok(frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateObservation {
    pub track_id: u64,
    pub text: String,
    pub confidence: f64,
    pub frame_index: u64,
}

/// Tracker output handed to the violation stage alongside the live tracks.
#[derive(Debug, Clone, Default)]
pub struct Tracked {
    pub plates: Vec<PlateObservation>,
    pub deleted: Vec<u64>,
}

pub struct TrackStage {
    tracker: Tracker,
}

impl TrackStage {
    pub fn new(tracker: Tracker) -> Self {
        Self { tracker }
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    pub fn process(&mut self, frame: &DetectionFrame) -> Result<Tracked, PipelineError> {
        let report = self.tracker.step(frame)?;
        let mut out = Tracked { deleted: report.deleted.iter().map(|t| t.track_id).collect(), ..Tracked::default() };
        for d in &frame.detections {
            let (ObjectClass::LicensePlate, Some(reading)) = (d.class, &d.plate_reading) else { continue };
            let c = d.bbox.center();
            // smallest containing box wins; ties go to the lower id
            let owner = self
                .tracker
                .tracks()
                .iter()
                .filter_map(|t| {
                    let e = t.last_entry()?;
                    (e.observed && e.frame_index == frame.frame_index && e.bbox.contains(c))
                        .then_some((e.bbox.area(), t.track_id))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, id)) = owner {
                let t = self.tracker.track_mut(id).expect("owner is live");
                t.plate_evidence.push(PlateEvidence { frame_index: frame.frame_index, reading: reading.clone() });
                out.plates.push(PlateObservation {
                    track_id: id,
                    text: reading.text.clone(),
                    confidence: reading.confidence,
                    frame_index: frame.frame_index,
                });
            }
        }
        out.plates.sort_by_key(|p| p.track_id);
        Ok(out)
    }
}

/// Events and speed traversals of one frame, before plate annotation.
#[derive(Debug, Clone, Default)]
pub struct Perceived {
    pub events: Vec<(ViolationEvent, MotionHint)>,
    pub speeds: Vec<SpeedMeasurement>,
    pub plates: Vec<PlateObservation>,
    pub deleted: Vec<u64>,
}

pub struct ViolationStage {
    engine: ViolationEngine,
    roi: RoiConfig,
    dims: (u32, u32),
    px_per_m: f64,
    fps: f64,
    zones: Option<ZoneSet>,
    calibration: Vec<DetectionFrame>,
    flow: Vec<Point>,
    source: ZonesSource,
}

impl ViolationStage {
    pub fn new(engine: ViolationEngine, roi: RoiConfig, dims: (u32, u32), px_per_m: f64, fps: f64, pinned: Option<ZoneSet>) -> Self {
        let source = if pinned.is_some() { ZonesSource::Pinned } else { ZonesSource::Unavailable };
        Self { engine, roi, dims, px_per_m, fps, zones: pinned, calibration: Vec::new(), flow: Vec::new(), source }
    }

    pub fn zones(&self) -> Option<&ZoneSet> {
        self.zones.as_ref()
    }

    pub fn source(&self) -> ZonesSource {
        self.source
    }

    pub fn calibration_frames_used(&self) -> usize {
        self.calibration.len()
    }

    fn collect_flow(&mut self, frame: u64, tracks: &[Track]) {
        for t in tracks.iter().filter(|t| t.is_confirmed()) {
            let n = t.history.len();
            if n < 2 {
                continue;
            }
            let (a, b) = (&t.history[n - 2], &t.history[n - 1]);
            if a.observed && b.observed && b.frame_index == frame && a.frame_index + 1 == frame {
                self.flow.push(b.point - a.point);
            }
        }
    }

    fn motion_hint(&self, track: &Track) -> MotionHint {
        let window = self.engine.config().wrong_way_window;
        let mut obs = track.observed().rev();
        let Some(last) = obs.next() else { return MotionHint::default() };
        let first = obs.take_while(|h| h.frame_index + window >= last.frame_index).last();
        let Some(first) = first else { return MotionHint::default() };
        let frames = (last.frame_index - first.frame_index) as f64;
        let v = (last.point - first.point) / frames;
        MotionHint { direction_px: v, speed_kmh: v.norm() * self.fps / self.px_per_m * 3.6 }
    }

    pub fn process(&mut self, frame: &DetectionFrame, tracks: &[Track], tracked: Tracked) -> Result<Perceived, PipelineError> {
        let mut out = Perceived { plates: tracked.plates, deleted: tracked.deleted, ..Perceived::default() };
        for id in &out.deleted {
            self.engine.forget(*id);
        }
        let Some(zones) = &self.zones else {
            // calibration: track only, no events
            self.calibration.push(frame.clone());
            self.collect_flow(frame.frame_index, tracks);
            if self.calibration.len() >= self.roi.calibration_frames {
                let zones = derive_zones(&self.calibration, &self.flow, self.dims, &self.roi)?;
                self.zones = Some(zones);
                self.source = ZonesSource::Derived;
            }
            return Ok(out);
        };
        let result = self.engine.process(frame, tracks, zones);
        out.events = result
            .events
            .into_iter()
            .map(|e| {
                let hint = tracks.iter().find(|t| t.track_id == e.track_id).map(|t| self.motion_hint(t)).unwrap_or_default();
                (e, hint)
            })
            .collect();
        out.speeds = result.speeds;
        Ok(out)
    }
}

pub struct PlateStage {
    config: PlateConfig,
    ballots: BTreeMap<u64, PlateBallot>,
}

impl PlateStage {
    pub fn new(config: PlateConfig) -> Self {
        Self { config, ballots: BTreeMap::new() }
    }

    /// Feeds this frame's readings, then stamps each event with its track's
    /// current vote.
    pub fn process(&mut self, mut p: Perceived) -> Perceived {
        for obs in std::mem::take(&mut p.plates) {
            let cap = self.config.t_vote;
            self.ballots
                .entry(obs.track_id)
                .or_insert_with(|| PlateBallot::new(obs.track_id, cap))
                .push(obs.text, obs.confidence, obs.frame_index);
        }
        for (event, _) in &mut p.events {
            event.plate = self
                .ballots
                .get(&event.track_id)
                .and_then(|b| vote(b, &self.config.grammar, self.config.min_readings))
                .map(|v| v.text);
        }
        for id in &p.deleted {
            self.ballots.remove(id);
        }
        p
    }
}

/// Everything the run leaves behind, in emission order.
#[derive(Debug, Clone, Default)]
pub struct Logs {
    pub events: Vec<ViolationEvent>,
    pub speeds: Vec<SpeedMeasurement>,
    /// Forwarded wire payloads, one JSON document each.
    pub messages: Vec<String>,
    pub dead_letters: Vec<DeadLetter>,
    pub latency: Vec<LatencySample>,
    pub gate: GateCounts,
    pub delivered: usize,
}

struct Dissemination {
    camera: CameraConfig,
    salt: Vec<u8>,
    gate: Gate,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    log_delay: DelaySampler,
    rng: ChaCha8Rng,
    last_log_us: i64,
}

pub struct V2xStage {
    link: Option<Dissemination>,
    pub logs: Logs,
}

impl V2xStage {
    /// `None` disables dissemination; events are still logged.
    pub fn new(config: &PipelineConfig, salt: &[u8], camera: CameraConfig, transport: Option<Box<dyn Transport>>) -> Result<Self, PipelineError> {
        if !config.v2x_enabled {
            return Ok(Self { link: None, logs: Logs::default() });
        }
        let transport = match transport {
            Some(t) => t,
            None => Box::new(SimBroker::new(config.transport.clone())?),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.transport.seed);
        rng.set_stream(1);
        Ok(Self {
            link: Some(Dissemination {
                camera,
                salt: salt.to_vec(),
                gate: Gate::new(config.gate.clone())?,
                transport,
                retry: config.transport.retry.clone(),
                log_delay: DelaySampler::new(config.transport.log_delay.clone())?,
                rng,
                last_log_us: i64::MIN,
            }),
            logs: Logs::default(),
        })
    }

    pub fn process(&mut self, p: Perceived) -> Result<(), PipelineError> {
        self.logs.speeds.extend(p.speeds);
        for (event, hint) in p.events {
            if let Some(link) = &mut self.link {
                // the event log has one writer, so log stamps never decrease
                let t_log = (event.t_capture_us + link.log_delay.sample_us(&mut link.rng)).max(link.last_log_us);
                link.last_log_us = t_log;
                let msg = to_safety_message(&event, Some(&link.camera), &link.salt, hint)?;
                match link.gate.check(&msg, t_log) {
                    GateDecision::DropDup => self.logs.gate.drop_dup += 1,
                    GateDecision::DropRate => self.logs.gate.drop_rate += 1,
                    GateDecision::Forward => {
                        self.logs.gate.forwarded += 1;
                        self.logs.messages.push(msg.to_json());
                        match publish(link.transport.as_mut(), &msg, event.event_id, t_log, &link.retry) {
                            PublishOutcome::Delivered(r) => {
                                self.logs.delivered += 1;
                                if let Some(t_endpoint) = r.endpoints.iter().map(|e| e.t_us).min() {
                                    self.logs.latency.push(LatencySample {
                                        event_id: event.event_id,
                                        t_frame: event.t_capture_us,
                                        t_log,
                                        t_publish: r.t_publish_us,
                                        t_broker: r.t_broker_us,
                                        t_endpoint,
                                    });
                                }
                            }
                            PublishOutcome::DeadLetter(d) => self.logs.dead_letters.push(d),
                        }
                    }
                }
            }
            self.logs.events.push(event);
        }
        Ok(())
    }
}
