//! Multi-object tracking: Kalman prediction, gated optimal assignment on a
//! blend of box overlap and appearance distance, and track lifecycle.

pub mod assignment;
mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kalman::{
    bbox_to_measurement, measurement_to_bbox, KalmanParams, MeasCov, MeasVec, StateCov, StateVec,
    TrackState,
};

use crate::geom::{BBox, Point};
use crate::trace::{Detection, DetectionFrame, ObjectClass, PlateReading};

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("detection class {detection:?} does not match track class {track:?}")]
    ClassMismatch { track: ObjectClass, detection: ObjectClass },
    #[error("frame {got} presented after frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    /// Frames a track may go unmatched before deletion.
    pub max_age: u32,
    /// Hits needed to confirm a tentative track.
    pub n_init: u32,
    /// Weight of the motion (IoU) term in the association cost.
    pub lambda_motion: f64,
    /// Cosine-distance ceiling of the appearance gate.
    pub gate_appearance: f64,
    pub embedding_capacity: usize,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.45,
            confidence_threshold: 0.50,
            max_age: 30,
            n_init: 3,
            lambda_motion: 0.5,
            gate_appearance: 0.4,
            embedding_capacity: 50,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let unit = 0.0..=1.0;
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if !unit.contains(&self.iou_threshold) {
            return bad("iou_threshold must lie in [0, 1]");
        }
        if !unit.contains(&self.confidence_threshold) {
            return bad("confidence_threshold must lie in [0, 1]");
        }
        if !unit.contains(&self.lambda_motion) {
            return bad("lambda_motion must lie in [0, 1]");
        }
        if !(0.0..=2.0).contains(&self.gate_appearance) {
            return bad("gate_appearance must lie in [0, 2]");
        }
        if self.n_init == 0 || self.embedding_capacity == 0 {
            return bad("n_init and embedding_capacity must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub frame_index: u64,
    pub bbox: BBox,
    /// Bottom-center of `bbox`.
    pub point: Point,
    /// False when the entry is the filter prediction for a missed frame.
    pub observed: bool,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateEvidence {
    pub frame_index: u64,
    pub reading: PlateReading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub state: TrackState,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    pub class: ObjectClass,
    pub embedding_gallery: VecDeque<Vec<f64>>,
    pub history: Vec<HistoryEntry>,
    pub plate_evidence: Vec<PlateEvidence>,
}

impl Track {
    pub fn new(track_id: u64, detection: &Detection, frame_index: u64, config: &TrackerConfig) -> Self {
        let mut t = Track {
            track_id,
            state: TrackState::initiate(&detection.bbox, &config.kalman),
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            class: detection.class,
            embedding_gallery: VecDeque::with_capacity(config.embedding_capacity),
            history: Vec::new(),
            plate_evidence: Vec::new(),
        };
        if let Some(e) = &detection.embedding {
            t.embedding_gallery.push_back(e.clone());
        }
        t.push_history(frame_index, detection.bbox, true, detection.confidence);
        if t.hits >= config.n_init {
            t.status = TrackStatus::Confirmed;
        }
        t
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    /// Current box estimate.
    pub fn predicted_bbox(&self) -> BBox {
        self.state.bbox()
    }

    pub fn last_entry(&self) -> Option<&HistoryEntry> {
        self.history.last()
    }

    /// Observed history entries, oldest first.
    pub fn observed(&self) -> impl DoubleEndedIterator<Item = &HistoryEntry> {
        self.history.iter().filter(|h| h.observed)
    }

    /// Min cosine distance between `embedding` and the gallery.
    pub fn appearance_distance(&self, embedding: &[f64]) -> Option<f64> {
        self.embedding_gallery
            .iter()
            .map(|g| 1.0 - g.iter().zip(embedding).map(|(a, b)| a * b).sum::<f64>())
            .min_by(f64::total_cmp)
    }

    fn push_history(&mut self, frame_index: u64, bbox: BBox, observed: bool, confidence: f64) {
        debug_assert!(self.history.last().is_none_or(|h| h.frame_index < frame_index));
        self.history.push(HistoryEntry {
            frame_index,
            bbox,
            point: bbox.bottom_center(),
            observed,
            confidence,
        });
    }
}

/// Advances the track one frame under the constant-velocity model.
pub fn predict(track: &mut Track, params: &KalmanParams) {
    debug_assert!(track.status != TrackStatus::Deleted);
    track.state.predict(params);
}

/// Folds a matched detection into the track.
pub fn update(
    track: &mut Track,
    detection: &Detection,
    frame_index: u64,
    config: &TrackerConfig,
) -> Result<(), TrackerError> {
    if detection.class != track.class {
        return Err(TrackerError::ClassMismatch { track: track.class, detection: detection.class });
    }
    track.state.update(&bbox_to_measurement(&detection.bbox), &config.kalman);
    track.hits += 1;
    track.misses = 0;
    if let Some(e) = &detection.embedding {
        if track.embedding_gallery.len() == config.embedding_capacity {
            track.embedding_gallery.pop_front();
        }
        track.embedding_gallery.push_back(e.clone());
    }
    if track.status == TrackStatus::Tentative && track.hits >= config.n_init {
        track.status = TrackStatus::Confirmed;
    }
    track.push_history(frame_index, detection.bbox, true, detection.confidence);
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// (track_id, detection index).
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

/// Association cost of one track/detection pair, `None` when gated out.
pub fn pair_cost(track: &Track, detection: &Detection, config: &TrackerConfig) -> Option<f64> {
    if track.class != detection.class {
        return None;
    }
    let iou = track.predicted_bbox().iou(&detection.bbox);
    let appearance = detection
        .embedding
        .as_deref()
        .and_then(|e| track.appearance_distance(e));
    match appearance {
        Some(dist) => {
            if iou < config.iou_threshold && dist > config.gate_appearance {
                None
            } else {
                Some(config.lambda_motion * (1.0 - iou) + (1.0 - config.lambda_motion) * dist)
            }
        }
        None => (iou >= config.iou_threshold).then_some(1.0 - iou),
    }
}

pub fn cost_matrix(tracks: &[Track], detections: &[Detection], config: &TrackerConfig) -> Vec<Vec<Option<f64>>> {
    tracks
        .iter()
        .map(|t| detections.iter().map(|d| pair_cost(t, d, config)).collect())
        .collect()
}

/// Globally optimal gated assignment of detections to (already predicted) tracks.
pub fn associate(tracks: &[Track], detections: &[Detection], config: &TrackerConfig) -> Association {
    // row order by track id so ties favour the oldest track
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].track_id);
    let sorted: Vec<&Track> = order.iter().map(|&i| &tracks[i]).collect();
    let cost: Vec<Vec<Option<f64>>> = sorted
        .iter()
        .map(|t| detections.iter().map(|d| pair_cost(t, d, config)).collect())
        .collect();
    let pairs = assignment::solve(&cost);
    let mut track_used = vec![false; sorted.len()];
    let mut det_used = vec![false; detections.len()];
    let mut matches = Vec::with_capacity(pairs.len());
    for (r, c) in pairs {
        track_used[r] = true;
        det_used[c] = true;
        matches.push((sorted[r].track_id, c));
    }
    Association {
        matches,
        unmatched_tracks: sorted
            .iter()
            .zip(&track_used)
            .filter(|(_, &u)| !u)
            .map(|(t, _)| t.track_id)
            .collect(),
        unmatched_detections: (0..detections.len()).filter(|&j| !det_used[j]).collect(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    /// (track_id, index into the frame's detections).
    pub matches: Vec<(u64, usize)>,
    pub spawned: Vec<u64>,
    /// Tracks removed this frame, with status `Deleted`.
    pub deleted: Vec<Track>,
}

/// One tracker per camera stream; frames must arrive in trace order.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self { config, tracks: Vec::new(), next_id: 1, last_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live (tentative or confirmed) tracks, ordered by id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.track_id == id)
    }

    /// predict -> associate -> update -> age/delete -> spawn.
    pub fn step(&mut self, frame: &DetectionFrame) -> Result<StepReport, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame.frame_index <= last {
                return Err(TrackerError::OutOfOrderFrame { last, got: frame.frame_index });
            }
        }
        self.last_frame = Some(frame.frame_index);
        let cfg = self.config;

        for t in &mut self.tracks {
            predict(t, &cfg.kalman);
        }

        let candidates: Vec<usize> = frame
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class.is_vehicle() && d.confidence >= cfg.confidence_threshold)
            .map(|(i, _)| i)
            .collect();
        let dets: Vec<Detection> = candidates.iter().map(|&i| frame.detections[i].clone()).collect();
        let assoc = associate(&self.tracks, &dets, &cfg);

        let mut report = StepReport::default();
        for &(id, j) in &assoc.matches {
            let track = self.tracks.iter_mut().find(|t| t.track_id == id).expect("matched track exists");
            update(track, &dets[j], frame.frame_index, &cfg)?;
            report.matches.push((id, candidates[j]));
        }

        for id in &assoc.unmatched_tracks {
            let track = self.tracks.iter_mut().find(|t| t.track_id == *id).expect("track exists");
            track.misses += 1;
            if track.misses > cfg.max_age {
                track.status = TrackStatus::Deleted;
            } else {
                let b = track.predicted_bbox();
                track.push_history(frame.frame_index, b, false, 0.0);
            }
        }
        let (dead, live): (Vec<Track>, Vec<Track>) =
            std::mem::take(&mut self.tracks).into_iter().partition(|t| t.status == TrackStatus::Deleted);
        self.tracks = live;
        report.deleted = dead;

        for &j in &assoc.unmatched_detections {
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track::new(id, &dets[j], frame.frame_index, &cfg));
            report.spawned.push(id);
        }
        report.matches.sort_unstable();
        Ok(report)
    }

    /// Drains all live tracks, marking them deleted (end of stream).
    pub fn finish(&mut self) -> Vec<Track> {
        let mut out = std::mem::take(&mut self.tracks);
        for t in &mut out {
            t.status = TrackStatus::Deleted;
        }
        out
    }
}
