use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SpeedMeasurement, ViolationClass, ViolationEvent};
use crate::trace::GroundTruth;
use crate::tracker::assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Frames an event may fall outside its ground-truth span and still match.
    pub slack_frames: u64,
    /// Score zebra breaches as signal jumps.
    pub merge_signal_zebra: bool,
    /// Speeding truths at or below this speed are scored for speed error only.
    pub speed_limit_kmh: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { slack_frames: 15, merge_signal_zebra: false, speed_limit_kmh: 60.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1.0 when no events were emitted.
    pub precision: f64,
    /// 1.0 when there was nothing to find.
    pub recall: f64,
    /// Share of emitted events that match no truth.
    pub fp_rate: f64,
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let emitted = tp + fp;
        let truths = tp + fn_;
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision: if emitted == 0 { 1.0 } else { tp as f64 / emitted as f64 },
            recall: if truths == 0 { 1.0 } else { tp as f64 / truths as f64 },
            fp_rate: if emitted == 0 { 0.0 } else { fp as f64 / emitted as f64 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<ViolationClass, ClassMetrics>,
    pub overall: ClassMetrics,
    /// Mean absolute speed error over matched traversals.
    pub speed_mae_kmh: Option<f64>,
    pub speed_matched: usize,
    /// Speed truths with no matching measurement.
    pub speed_missed: usize,
}

fn frame_gap(frame: u64, span: [u64; 2]) -> u64 {
    if frame < span[0] {
        span[0] - frame
    } else {
        frame.saturating_sub(span[1])
    }
}

/// Max-cardinality, min-total-gap matching of events to truths.
fn match_count(events: &[&ViolationEvent], truths: &[&GroundTruth], slack: u64) -> usize {
    let cost: Vec<Vec<Option<f64>>> = truths
        .iter()
        .map(|t| {
            events
                .iter()
                .map(|e| {
                    let gap = frame_gap(e.frame_index, t.span);
                    (gap <= slack).then_some(gap as f64)
                })
                .collect()
        })
        .collect();
    assignment::solve(&cost).len()
}

/// Scores an event log against scripted ground truth.
pub fn evaluate(
    events: &[ViolationEvent],
    speeds: &[SpeedMeasurement],
    truth: &[GroundTruth],
    config: &EvalConfig,
) -> EvalReport {
    let key = |c: ViolationClass| {
        if config.merge_signal_zebra && c == ViolationClass::ZebraBreach {
            ViolationClass::SignalJump
        } else {
            c
        }
    };
    let scored_truth = |t: &&GroundTruth| {
        t.class != ViolationClass::Speeding || t.speed_kmh.is_none_or(|v| v > config.speed_limit_kmh)
    };
    let mut report = EvalReport::default();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut classes: Vec<ViolationClass> = ViolationClass::ALL.iter().map(|&c| key(c)).collect();
    classes.dedup();
    for class in classes {
        let ev: Vec<&ViolationEvent> = events.iter().filter(|e| key(e.class) == class).collect();
        let gt: Vec<&GroundTruth> = truth.iter().filter(|t| key(t.class) == class).filter(scored_truth).collect();
        let matched = match_count(&ev, &gt, config.slack_frames);
        let m = ClassMetrics::from_counts(matched, ev.len() - matched, gt.len() - matched);
        tp += m.true_positives;
        fp += m.false_positives;
        fn_ += m.false_negatives;
        report.per_class.insert(class, m);
    }
    report.overall = ClassMetrics::from_counts(tp, fp, fn_);

    let speed_truth: Vec<&GroundTruth> = truth
        .iter()
        .filter(|t| t.class == ViolationClass::Speeding && t.speed_kmh.is_some())
        .collect();
    let cost: Vec<Vec<Option<f64>>> = speed_truth
        .iter()
        .map(|t| {
            speeds
                .iter()
                .map(|m| {
                    let gap = m.start_frame.abs_diff(t.span[0]) + m.stop_frame.abs_diff(t.span[1]);
                    (gap <= config.slack_frames).then_some(gap as f64)
                })
                .collect()
        })
        .collect();
    let pairs = assignment::solve(&cost);
    if !pairs.is_empty() {
        let total: f64 = pairs
            .iter()
            .map(|&(t, m)| (speeds[m].speed_kmh - speed_truth[t].speed_kmh.unwrap_or_default()).abs())
            .sum();
        report.speed_mae_kmh = Some(total / pairs.len() as f64);
    }
    report.speed_matched = pairs.len();
    report.speed_missed = speed_truth.len() - pairs.len();
    report
}
