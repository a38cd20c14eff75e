//! Synthetic scenario generation.
//!
//! The world is a flat top-down plane in meters that maps onto the image by a
//! pure scale (`px_per_m`), so every geometric predicate downstream sees the
//! same relations as in world space. Vehicles follow piecewise-linear paths of
//! their bottom-center reference point at constant speed, optionally holding
//! at waypoints. Ground truth is derived from the sampled world trajectory,
//! not from what the detector happens to see, so an occluded violation is
//! still a ground-truth violation.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{
    Detection, DetectionFrame, GroundTruth, ObjectClass, PlateReading, Scenario, SignalPhase,
};
use super::TraceError;
use crate::geom::{BBox, Point};
use crate::violations::ViolationClass;

/// Character confusions applied when corrupting synthetic plate readings.
pub const OCR_CONFUSIONS: [(char, char); 4] = [('O', '0'), ('I', '1'), ('B', '8'), ('S', '5')];

const HOLD_STATIONARY_FRAMES: usize = 15;

fn default_px_per_m() -> f64 {
    10.0
}
fn default_traffic_dir() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_speed_distance() -> f64 {
    100.0
}
fn default_anchors() -> [f64; 2] {
    [0.25, 0.75]
}
fn default_embedding_dim() -> usize {
    32
}
fn default_one() -> u32 {
    1
}
fn default_static_conf() -> f64 {
    0.95
}
fn default_vehicle_conf() -> f64 {
    0.9
}
fn default_size() -> [f64; 2] {
    [2.0, 4.5]
}
fn default_vehicle_class() -> ObjectClass {
    ObjectClass::Vehicle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub frame_rate: f64,
    pub duration_s: f64,
    /// (width, height) in pixels.
    pub frame_dims: (u32, u32),
    #[serde(default = "default_px_per_m")]
    pub px_per_m: f64,
    #[serde(default)]
    pub epoch_us: i64,
    /// Nominal direction of lawful traffic, world frame.
    #[serde(default = "default_traffic_dir")]
    pub traffic_dir: [f64; 2],
    /// Surveyed distance between the speed start and stop lines.
    #[serde(default = "default_speed_distance")]
    pub speed_distance_m: f64,
    /// Speed-line anchors as fractions of the lane extent.
    #[serde(default = "default_anchors")]
    pub speed_anchors: [f64; 2],
    #[serde(default)]
    pub statics: Vec<StaticFeature>,
    #[serde(default)]
    pub phases: Vec<PhaseChange>,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_one")]
    pub plate_every_n_frames: u32,
}

/// Axis-aligned static road feature, `[x0, y0, x1, y1]` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFeature {
    pub class: ObjectClass,
    pub rect_m: [f64; 4],
    #[serde(default = "default_static_conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChange {
    pub at_s: f64,
    pub phase: SignalPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldSpec {
    pub waypoint: usize,
    #[serde(default)]
    pub for_s: f64,
    /// Absolute scenario time before which the vehicle may not leave.
    #[serde(default)]
    pub until_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub label: String,
    #[serde(default = "default_vehicle_class")]
    pub class: ObjectClass,
    /// (width across travel, length along travel), meters.
    #[serde(default = "default_size")]
    pub size_m: [f64; 2],
    /// Bottom-center waypoints in meters.
    pub path: Vec<[f64; 2]>,
    pub speed_kmh: f64,
    #[serde(default)]
    pub depart_s: f64,
    #[serde(default)]
    pub holds: Vec<HoldSpec>,
    #[serde(default)]
    pub violations: Vec<ViolationClass>,
    #[serde(default)]
    pub plate: Option<String>,
    /// `[start_s, end_s)` intervals in which the detector misses the vehicle.
    #[serde(default)]
    pub occlusions: Vec<[f64; 2]>,
    #[serde(default = "default_vehicle_conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub bbox_px_std: f64,
    #[serde(default)]
    pub static_jitter_px: f64,
    #[serde(default)]
    pub embedding_std: f64,
    #[serde(default)]
    pub plate_corruption_p: f64,
    #[serde(default)]
    pub drop_p: f64,
}

#[derive(Debug, Clone, Copy)]
enum Leg {
    Move { from: Point, to: Point, t0: f64, t1: f64 },
    Hold { at: Point, dir: Point, t0: f64, t1: f64 },
}

/// Time-parameterized bottom-center trajectory of one vehicle.
#[derive(Debug, Clone)]
struct Motion {
    legs: Vec<Leg>,
}

impl Motion {
    fn build(v: &VehicleSpec) -> Result<Self, TraceError> {
        if v.path.len() < 2 {
            return Err(infeasible(&v.label, "path needs at least two waypoints"));
        }
        if !(v.speed_kmh > 0.0) {
            return Err(infeasible(&v.label, "speed must be positive"));
        }
        let speed = v.speed_kmh / 3.6;
        let pts: Vec<Point> = v.path.iter().map(|&p| Point::from(p)).collect();
        let mut legs = Vec::new();
        let mut t = v.depart_s;
        let mut last_dir = (pts[1] - pts[0]).normalized().unwrap_or(Point::new(0.0, 1.0));
        for i in 0..pts.len() {
            for hold in v.holds.iter().filter(|h| h.waypoint == i) {
                let mut release = t + hold.for_s.max(0.0);
                if let Some(u) = hold.until_s {
                    release = release.max(u);
                }
                if release > t {
                    legs.push(Leg::Hold { at: pts[i], dir: last_dir, t0: t, t1: release });
                    t = release;
                }
            }
            if i + 1 < pts.len() {
                let len = pts[i].dist(pts[i + 1]);
                if len == 0.0 {
                    continue;
                }
                last_dir = (pts[i + 1] - pts[i]) / len;
                let dt = len / speed;
                legs.push(Leg::Move { from: pts[i], to: pts[i + 1], t0: t, t1: t + dt });
                t += dt;
            }
        }
        if v.holds.iter().any(|h| h.waypoint >= pts.len()) {
            return Err(infeasible(&v.label, "hold references a missing waypoint"));
        }
        Ok(Self { legs })
    }

    /// Bottom-center position and unit heading at time `t`.
    fn at(&self, t: f64) -> Option<(Point, Point)> {
        let first = self.legs.first()?;
        let start = match first {
            Leg::Move { t0, .. } | Leg::Hold { t0, .. } => *t0,
        };
        if t < start {
            return None;
        }
        for leg in &self.legs {
            match *leg {
                Leg::Move { from, to, t0, t1 } if t <= t1 => {
                    let f = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
                    let dir = (to - from).normalized().unwrap_or(Point::new(0.0, 1.0));
                    return Some((from + (to - from) * f, dir));
                }
                Leg::Hold { at, dir, t1, .. } if t <= t1 => return Some((at, dir)),
                _ => {}
            }
        }
        None
    }
}

fn infeasible(label: &str, why: &str) -> TraceError {
    TraceError::InfeasibleScript(format!("{label}: {why}"))
}

/// Union bounding rectangle of all statics of one class.
fn union_rect(spec: &ScenarioSpec, class: ObjectClass) -> Option<[f64; 4]> {
    spec.statics.iter().filter(|s| s.class == class).fold(None, |acc, s| {
        let r = s.rect_m;
        Some(match acc {
            None => r,
            Some(a) => [a[0].min(r[0]), a[1].min(r[1]), a[2].max(r[2]), a[3].max(r[3])],
        })
    })
}

fn in_rect(r: &[f64; 4], p: Point) -> bool {
    p.x >= r[0] && p.x <= r[2] && p.y >= r[1] && p.y <= r[3]
}

fn phase_at(spec: &ScenarioSpec, t: f64) -> SignalPhase {
    spec.phases
        .iter()
        .filter(|p| p.at_s <= t)
        .max_by(|a, b| a.at_s.total_cmp(&b.at_s))
        .map(|p| p.phase)
        .unwrap_or(SignalPhase::None)
}

/// Zones A, B, C of the first divider opening, in world meters.
fn world_uturn_zones(spec: &ScenarioSpec) -> Option<[[f64; 4]; 3]> {
    let dir = Point::from(spec.traffic_dir).normalized()?;
    let along_y = dir.y.abs() >= dir.x.abs();
    let mut dividers: Vec<[f64; 4]> = spec
        .statics
        .iter()
        .filter(|s| s.class == ObjectClass::Divider)
        .map(|s| s.rect_m)
        .collect();
    if dividers.len() < 2 || !along_y {
        return None;
    }
    dividers.sort_by(|a, b| a[1].total_cmp(&b[1]));
    let lanes = union_rect(spec, ObjectClass::Lane)?;
    let lane_count = spec.statics.iter().filter(|s| s.class == ObjectClass::Lane).count();
    let lane_w = (lanes[2] - lanes[0]) / lane_count as f64;
    let best = dividers
        .windows(2)
        .filter(|w| w[1][1] - w[0][3] > 0.0)
        .max_by(|a, b| (a[1][1] - a[0][3]).total_cmp(&(b[1][1] - b[0][3])))?;
    let x0 = best[0][0].min(best[1][0]);
    let x1 = best[0][2].max(best[1][2]);
    let b = [x0, best[0][3], x1, best[1][1]];
    let left = [x0 - lane_w, b[1], x0, b[3]];
    let right = [x1, b[1], x1 + lane_w, b[3]];
    let lane_cx = (lanes[0] + lanes[2]) / 2.0;
    let dl = ((left[0] + left[2]) / 2.0 - lane_cx).abs();
    let dr = ((right[0] + right[2]) / 2.0 - lane_cx).abs();
    // zone A is the approach side, adjacent to the monitored carriageway
    let (a, c) = if dl <= dr { (left, right) } else { (right, left) };
    Some([a, b, c])
}

fn random_plate(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::with_capacity(10);
    for slot in "AA00AA0000".chars() {
        let c = if slot == 'A' {
            (b'A' + rng.random_range(0..26u8)) as char
        } else {
            (b'0' + rng.random_range(0..10u8)) as char
        };
        s.push(c);
    }
    s
}

/// Applies per-character confusion substitutions with probability `p`.
pub fn corrupt_plate(text: &str, p: f64, rng: &mut impl Rng) -> String {
    text.chars()
        .map(|c| {
            let partner = OCR_CONFUSIONS.iter().find_map(|&(a, b)| {
                if c == a {
                    Some(b)
                } else if c == b {
                    Some(a)
                } else {
                    None
                }
            });
            match partner {
                Some(sub) if rng.random::<f64>() < p => sub,
                _ => c,
            }
        })
        .collect()
}

/// Reading confidence under the corruption model: `0.95 - 2p` plus uniform(+-0.05).
pub fn reading_confidence(p: f64, rng: &mut impl Rng) -> f64 {
    (0.95 - 2.0 * p + rng.random_range(-0.05..=0.05)).clamp(0.0, 1.0)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn validate_spec(spec: &ScenarioSpec) -> Result<(), TraceError> {
    let bad = |m: &str| Err(TraceError::InvalidSpec(m.to_string()));
    if !(spec.frame_rate > 0.0 && spec.frame_rate.is_finite()) {
        return bad("frame_rate must be positive");
    }
    if !(spec.duration_s >= 0.0) {
        return bad("duration_s must be non-negative");
    }
    if !(spec.px_per_m > 0.0) {
        return bad("px_per_m must be positive");
    }
    if spec.embedding_dim == 0 {
        return bad("embedding_dim must be positive");
    }
    if !(0.0..=1.0).contains(&spec.noise.plate_corruption_p)
        || !(0.0..=1.0).contains(&spec.noise.drop_p)
    {
        return bad("noise probabilities must lie in [0, 1]");
    }
    let mut labels = BTreeSet::new();
    for v in &spec.vehicles {
        if !labels.insert(v.label.as_str()) {
            return bad(&format!("duplicate vehicle label {}", v.label));
        }
        if !v.class.is_vehicle() {
            return bad(&format!("{} is not a vehicle class", v.label));
        }
    }
    Ok(())
}

/// Builds a deterministic synthetic trace with ground truth for `spec`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario, TraceError> {
    validate_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fps = spec.frame_rate;
    let n_frames = (spec.duration_s * fps).round() as u64;
    let times: Vec<f64> = (0..n_frames).map(|i| i as f64 / fps).collect();
    let scale = spec.px_per_m;
    let (fw, fh) = (spec.frame_dims.0 as f64, spec.frame_dims.1 as f64);

    let motions = spec.vehicles.iter().map(Motion::build).collect::<Result<Vec<_>, _>>()?;
    let embeddings: Vec<Vec<f64>> =
        spec.vehicles.iter().map(|_| random_unit(spec.embedding_dim, &mut rng)).collect();
    let plates: Vec<String> = spec
        .vehicles
        .iter()
        .map(|v| v.plate.clone().unwrap_or_else(|| random_plate(&mut rng)))
        .collect();

    let mut scenario = Scenario::new(fps, spec.frame_dims);
    scenario.ground_truth = ground_truth(spec, &motions, &times)?;
    for (v, plate) in spec.vehicles.iter().zip(&plates) {
        scenario.plates.insert(v.label.clone(), plate.clone());
    }

    let bbox_noise = Normal::new(0.0, spec.noise.bbox_px_std.max(0.0)).expect("finite std");
    let static_noise = Normal::new(0.0, spec.noise.static_jitter_px.max(0.0)).expect("finite std");
    let emb_noise = Normal::new(0.0, spec.noise.embedding_std.max(0.0)).expect("finite std");

    for (i, &t) in times.iter().enumerate() {
        let offset_us = (i as f64 * 1e6 / fps).round() as i64;
        let mut frame = DetectionFrame::new(i as u64, spec.epoch_us + offset_us, offset_us);
        frame.signal_phase = phase_at(spec, t);

        for s in &spec.statics {
            let r = s.rect_m;
            let x0 = (r[0] * scale + static_noise.sample(&mut rng)).clamp(0.0, fw);
            let y0 = (r[1] * scale + static_noise.sample(&mut rng)).clamp(0.0, fh);
            let x1 = (r[2] * scale + static_noise.sample(&mut rng)).clamp(0.0, fw);
            let y1 = (r[3] * scale + static_noise.sample(&mut rng)).clamp(0.0, fh);
            if x1 - x0 > 0.0 && y1 - y0 > 0.0 {
                frame
                    .detections
                    .push(Detection::new(s.class, BBox::new(x0, y0, x1 - x0, y1 - y0), s.confidence));
            }
        }

        let mut plate_dets = Vec::new();
        for (k, (v, motion)) in spec.vehicles.iter().zip(&motions).enumerate() {
            let Some((p, dir)) = motion.at(t) else { continue };
            let occluded = v.occlusions.iter().any(|o| t >= o[0] && t < o[1]);
            let dropped = spec.noise.drop_p > 0.0 && rng.random::<f64>() < spec.noise.drop_p;
            let (mut w, mut h) = (v.size_m[0] * scale, v.size_m[1] * scale);
            if dir.x.abs() > dir.y.abs() {
                std::mem::swap(&mut w, &mut h);
            }
            let jx = bbox_noise.sample(&mut rng);
            let jy = bbox_noise.sample(&mut rng);
            let bbox = BBox::new(p.x * scale - w / 2.0 + jx, p.y * scale - h + jy, w, h);
            let visible = bbox.x >= 0.0 && bbox.y >= 0.0 && bbox.x + w <= fw && bbox.y + h <= fh;
            if occluded || dropped || !visible {
                continue;
            }
            let mut e = embeddings[k].clone();
            if spec.noise.embedding_std > 0.0 {
                e.iter_mut().for_each(|x| *x += emb_noise.sample(&mut rng));
                normalize(&mut e);
            }
            frame.detections.push(Detection::new(v.class, bbox, v.confidence).with_embedding(e));

            if spec.plate_every_n_frames > 0 && (i as u64).is_multiple_of(spec.plate_every_n_frames as u64) {
                let pb = BBox::new(bbox.x + 0.25 * w, bbox.y + 0.82 * h, 0.5 * w, 0.12 * h);
                let text = corrupt_plate(&plates[k], spec.noise.plate_corruption_p, &mut rng);
                let conf = reading_confidence(spec.noise.plate_corruption_p, &mut rng);
                plate_dets.push(
                    Detection::new(ObjectClass::LicensePlate, pb, 0.85)
                        .with_plate(PlateReading::new(text, conf)),
                );
            }
        }
        frame.detections.extend(plate_dets);
        scenario.frames.push(frame);
    }
    Ok(scenario)
}

fn ground_truth(
    spec: &ScenarioSpec,
    motions: &[Motion],
    times: &[f64],
) -> Result<Vec<GroundTruth>, TraceError> {
    let dir = Point::from(spec.traffic_dir)
        .normalized()
        .ok_or_else(|| TraceError::InvalidSpec("traffic_dir must be non-zero".into()))?;
    let zebra = union_rect(spec, ObjectClass::ZebraCrossing);
    let lanes = union_rect(spec, ObjectClass::Lane);
    let mut out = Vec::new();

    for (v, motion) in spec.vehicles.iter().zip(motions) {
        let samples: Vec<Option<Point>> = times.iter().map(|&t| motion.at(t).map(|(p, _)| p)).collect();
        let pairs = || {
            samples.windows(2).enumerate().filter_map(|(i, w)| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some((i + 1, a, b)),
                _ => None,
            })
        };
        let violations: BTreeSet<ViolationClass> = v.violations.iter().copied().collect();
        for class in violations {
            let gt = |span: [u64; 2], speed: Option<f64>| GroundTruth {
                class,
                label: v.label.clone(),
                span,
                speed_kmh: speed,
            };
            match class {
                ViolationClass::SignalJump => {
                    let z = zebra.ok_or_else(|| infeasible(&v.label, "no zebra crossing"))?;
                    let ys = z[1];
                    let (f, _, _) = pairs()
                        .find(|&(_, a, b)| a.y < ys && b.y >= ys)
                        .ok_or_else(|| infeasible(&v.label, "never crosses the stop line"))?;
                    if phase_at(spec, times[f]) != SignalPhase::Red {
                        return Err(infeasible(&v.label, "stop-line crossing is not during red"));
                    }
                    out.push(gt([f as u64 - 1, f as u64], None));
                }
                ViolationClass::ZebraBreach => {
                    let z = zebra.ok_or_else(|| infeasible(&v.label, "no zebra crossing"))?;
                    let inside: Vec<usize> = samples
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.is_some_and(|p| in_rect(&z, p)))
                        .map(|(i, _)| i)
                        .collect();
                    let halted_red = inside.iter().any(|&i| {
                        i >= HOLD_STATIONARY_FRAMES
                            && phase_at(spec, times[i]) == SignalPhase::Red
                            && samples[i - HOLD_STATIONARY_FRAMES] == samples[i]
                    });
                    if !halted_red {
                        return Err(infeasible(&v.label, "never halts on the crossing during red"));
                    }
                    out.push(gt([inside[0] as u64, *inside.last().unwrap() as u64], None));
                }
                ViolationClass::WrongWay => {
                    let l = lanes.ok_or_else(|| infeasible(&v.label, "no lane features"))?;
                    let frames: Vec<usize> = pairs()
                        .filter(|&(_, a, b)| in_rect(&l, b) && (b - a).dot(dir) < 0.0)
                        .map(|(f, _, _)| f)
                        .collect();
                    let (Some(&f0), Some(&f1)) = (frames.first(), frames.last()) else {
                        return Err(infeasible(&v.label, "never moves against traffic in a lane"));
                    };
                    out.push(gt([f0 as u64, f1 as u64], None));
                }
                ViolationClass::IllegalUturn => {
                    let zones = world_uturn_zones(spec)
                        .ok_or_else(|| infeasible(&v.label, "no divider opening"))?;
                    let zone_of = |p: Point| zones.iter().position(|z| in_rect(z, p));
                    let hits: Vec<(usize, usize)> = samples
                        .iter()
                        .enumerate()
                        .filter_map(|(i, p)| p.and_then(zone_of).map(|z| (i, z)))
                        .collect();
                    let visited: BTreeSet<usize> = hits.iter().map(|&(_, z)| z).collect();
                    if visited.len() < 3 {
                        return Err(infeasible(&v.label, "does not traverse zones A, B and C"));
                    }
                    out.push(gt([hits[0].0 as u64, hits.last().unwrap().0 as u64], None));
                }
                ViolationClass::Speeding => {
                    let l = lanes.ok_or_else(|| infeasible(&v.label, "no lane features"))?;
                    let corners = [
                        Point::new(l[0], l[1]),
                        Point::new(l[2], l[1]),
                        Point::new(l[2], l[3]),
                        Point::new(l[0], l[3]),
                    ];
                    let lo = corners.iter().map(|c| c.dot(dir)).fold(f64::INFINITY, f64::min);
                    let hi = corners.iter().map(|c| c.dot(dir)).fold(f64::NEG_INFINITY, f64::max);
                    let s0 = lo + spec.speed_anchors[0] * (hi - lo);
                    let s1 = lo + spec.speed_anchors[1] * (hi - lo);
                    if ((s1 - s0) - spec.speed_distance_m).abs() > 1e-6 * spec.speed_distance_m.max(1.0) {
                        return Err(infeasible(
                            &v.label,
                            &format!(
                                "speed lines are {:.3} m apart, expected {}",
                                s1 - s0,
                                spec.speed_distance_m
                            ),
                        ));
                    }
                    let f0 = pairs().find(|&(_, a, b)| a.dot(dir) < s0 && b.dot(dir) >= s0);
                    let f1 = pairs().find(|&(_, a, b)| a.dot(dir) < s1 && b.dot(dir) >= s1);
                    match (f0, f1) {
                        (Some((f0, ..)), Some((f1, ..))) if f1 > f0 => {
                            out.push(gt([f0 as u64, f1 as u64], Some(v.speed_kmh)));
                        }
                        _ => return Err(infeasible(&v.label, "does not cross both speed lines")),
                    }
                }
            }
        }
    }
    Ok(out)
}
