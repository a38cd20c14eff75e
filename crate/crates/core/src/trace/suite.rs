//! The bundled evaluation scene: a four-lane one-way carriageway with a
//! signalized zebra crossing, a divider opening towards the opposite
//! carriageway, and a 100 m speed trap. The mixed suite scripts 19
//! violations (5 signal jumps, 3 zebra breaches, 4 wrong-way, 3 illegal
//! U-turns, 4 speeding) among compliant traffic over five 30 s signal cycles.
//!
//! Scene layout in meters (x across, y along travel; traffic moves +y):
//!
//! ```text
//!   lanes      x 32..48, y 20..220   (four 4 m lanes)
//!   divider    x 48..49, y 20..40 and 52..220 (opening at 40..52)
//!   zebra      x 32..48, y 180..184  (stop line at y = 180)
//!   speed trap y 70 and y 170        (0.25 / 0.75 of the lane extent)
//! ```

use super::generate::{HoldSpec, NoiseSpec, PhaseChange, ScenarioSpec, StaticFeature, VehicleSpec};
use super::model::{ObjectClass, SignalPhase};
use crate::violations::ViolationClass;

pub const SUITE_FPS: f64 = 30.0;
pub const SUITE_PX_PER_M: f64 = 5.0;
pub const SUITE_SEED: u64 = 19;
pub const CYCLE_S: f64 = 30.0;
pub const CYCLES: usize = 5;

const LANE_WW: f64 = 34.0;
const LANE_SIGNAL: f64 = 38.0;
const LANE_FAST: f64 = 42.0;
const LANE_DIVIDER: f64 = 46.0;
const ENTRY_Y: f64 = 5.0;
const EXIT_Y: f64 = 239.0;
const STOP_LINE_Y: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteVariant {
    Noiseless,
    /// One signal jumper is hidden from the detector for 1.6 s around its
    /// stop-line crossing, longer than the tracker's coasting budget.
    Occluded,
}

fn vehicle(label: String, path: Vec<[f64; 2]>, speed_kmh: f64, depart_s: f64) -> VehicleSpec {
    VehicleSpec {
        label,
        class: ObjectClass::Vehicle,
        size_m: [2.0, 4.5],
        path,
        speed_kmh,
        depart_s,
        holds: Vec::new(),
        violations: Vec::new(),
        plate: None,
        occlusions: Vec::new(),
        confidence: 0.9,
    }
}

/// Straight run down lane `x`, timed to reach `at_y` at `at_s`.
fn through(label: String, x: f64, speed_kmh: f64, at_y: f64, at_s: f64) -> VehicleSpec {
    let depart = at_s - (at_y - ENTRY_Y) / (speed_kmh / 3.6);
    vehicle(label, vec![[x, ENTRY_Y], [x, EXIT_Y]], speed_kmh, depart)
}

/// Run down lane `x` halting at `stop_y` (arriving at `arrive_s`) until `release_s`.
fn stopper(label: String, x: f64, speed_kmh: f64, stop_y: f64, arrive_s: f64, release_s: f64) -> VehicleSpec {
    let depart = arrive_s - (stop_y - ENTRY_Y) / (speed_kmh / 3.6);
    let mut v = vehicle(label, vec![[x, ENTRY_Y], [x, stop_y], [x, EXIT_Y]], speed_kmh, depart);
    v.holds.push(HoldSpec { waypoint: 1, for_s: 0.0, until_s: Some(release_s) });
    v
}

fn uturn(label: String, depart_s: f64) -> VehicleSpec {
    let path = vec![
        [LANE_DIVIDER, ENTRY_Y],
        [LANE_DIVIDER, 46.0],
        [48.5, 51.0],
        [51.0, 46.0],
        [51.0, ENTRY_Y],
    ];
    let mut v = vehicle(label, path, 15.0, depart_s);
    v.violations.push(ViolationClass::IllegalUturn);
    v
}

pub fn suite_statics() -> Vec<StaticFeature> {
    let mut statics = Vec::new();
    for k in 0..4 {
        let x0 = 32.0 + 4.0 * k as f64;
        statics.push(StaticFeature { class: ObjectClass::Lane, rect_m: [x0, 20.0, x0 + 4.0, 220.0], confidence: 0.95 });
    }
    statics.push(StaticFeature { class: ObjectClass::Divider, rect_m: [48.0, 20.0, 49.0, 40.0], confidence: 0.95 });
    statics.push(StaticFeature { class: ObjectClass::Divider, rect_m: [48.0, 52.0, 49.0, 220.0], confidence: 0.95 });
    statics.push(StaticFeature {
        class: ObjectClass::ZebraCrossing,
        rect_m: [32.0, STOP_LINE_Y, 48.0, 184.0],
        confidence: 0.95,
    });
    statics
}

pub fn suite_phases(cycles: usize) -> Vec<PhaseChange> {
    (0..cycles)
        .flat_map(|k| {
            let t = k as f64 * CYCLE_S;
            [
                PhaseChange { at_s: t, phase: SignalPhase::Green },
                PhaseChange { at_s: t + 12.0, phase: SignalPhase::Amber },
                PhaseChange { at_s: t + 15.0, phase: SignalPhase::Red },
            ]
        })
        .collect()
}

/// Scene geometry with no traffic, for callers scripting their own vehicles.
pub fn base_spec(duration_s: f64) -> ScenarioSpec {
    ScenarioSpec {
        frame_rate: SUITE_FPS,
        duration_s,
        frame_dims: (640, 1200),
        px_per_m: SUITE_PX_PER_M,
        epoch_us: 1_735_000_000_000_000,
        traffic_dir: [0.0, 1.0],
        speed_distance_m: 100.0,
        speed_anchors: [0.25, 0.75],
        statics: suite_statics(),
        phases: suite_phases((duration_s / CYCLE_S).ceil() as usize),
        vehicles: Vec::new(),
        noise: NoiseSpec { plate_corruption_p: 0.1, ..NoiseSpec::default() },
        embedding_dim: 32,
        plate_every_n_frames: 1,
    }
}

/// The 19-violation mixed suite.
pub fn mixed_suite(variant: SuiteVariant) -> ScenarioSpec {
    let mut spec = base_spec(CYCLES as f64 * CYCLE_S);
    let v = &mut spec.vehicles;

    // calibration-window traffic establishing the lawful flow direction
    v.push(through("cal1".into(), LANE_SIGNAL, 40.0, STOP_LINE_Y, 5.0));
    v.push(through("cal2".into(), LANE_FAST, 40.0, STOP_LINE_Y, 6.0));
    v.push(through("cal3".into(), LANE_SIGNAL, 40.0, STOP_LINE_Y, 8.5));
    v.push(through("cal4".into(), LANE_FAST, 40.0, STOP_LINE_Y, 9.5));

    let speeds = [90.0, 80.0, 100.0, 75.0];
    for k in 0..CYCLES {
        let t = k as f64 * CYCLE_S;
        let mut jumper = through(format!("sj{k}"), LANE_SIGNAL, 40.0, STOP_LINE_Y, t + 16.0);
        jumper.violations.push(ViolationClass::SignalJump);
        if variant == SuiteVariant::Occluded && k == 2 {
            jumper.occlusions.push([t + 15.2, t + 16.8]);
        }
        v.push(jumper);
        v.push(stopper(format!("stop{k}"), LANE_SIGNAL, 40.0, 178.0, t + 22.0, t + CYCLE_S));

        if k >= 1 {
            let mut fast = through(format!("spd{k}"), LANE_FAST, speeds[k - 1], ENTRY_Y, t + 0.5);
            fast.violations.push(ViolationClass::Speeding);
            v.push(fast);
            v.push(stopper(format!("slow{k}"), LANE_FAST, 45.0, 178.0, t + 20.0, t + CYCLE_S));

            let mut ww = vehicle(format!("ww{k}"), vec![[LANE_WW, EXIT_Y], [LANE_WW, ENTRY_Y]], 35.0, t + 2.0);
            ww.violations.push(ViolationClass::WrongWay);
            v.push(ww);
        }
        if (1..=3).contains(&k) {
            let mut zb = stopper(format!("zb{k}"), LANE_DIVIDER, 40.0, 182.5, t + 13.8, t + CYCLE_S);
            zb.violations.push(ViolationClass::ZebraBreach);
            v.push(zb);
            v.push(uturn(format!("ut{k}"), t + 3.0));
        }
    }
    spec
}
