use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::average::temporal_average;
use super::polygon::{convex_hull, Polygon};
use super::raster::{rasterize, Mask};
use super::{RoiConfig, RoiError};
use crate::geom::{Point, Segment};
use crate::trace::{Detection, DetectionFrame, ObjectClass};

/// Principal-axis eigenvalue ratio below which the lane direction is ambiguous.
pub const MIN_AXIS_RATIO: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividerZones {
    pub a: Polygon,
    pub b: Polygon,
    pub c: Polygon,
}

impl DividerZones {
    pub fn as_array(&self) -> [&Polygon; 3] {
        [&self.a, &self.b, &self.c]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedLines {
    pub start: Segment,
    pub stop: Segment,
    pub distance_m: f64,
}

/// Frozen violation-zone geometry for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSet {
    pub frame_dims: (u32, u32),
    pub cell_px: u32,
    pub zebra: Option<Polygon>,
    /// Directed along `(v.y, -v.x)` for lane vector `v`.
    pub stop_line: Option<Segment>,
    pub lane_regions: Vec<Polygon>,
    /// Hull of all lane detections.
    pub lane_hull: Option<Polygon>,
    pub lane_vector: Point,
    pub divider_zones: Option<DividerZones>,
    pub speed_lines: Option<SpeedLines>,
    #[serde(skip)]
    pub masks: BTreeMap<String, Mask>,
}

impl ZoneSet {
    /// Rebuilds the raster masks from the polygons.
    pub fn rebuild_masks(&mut self) {
        let mut masks = BTreeMap::new();
        let dims = self.frame_dims;
        let cell = self.cell_px;
        if let Some(z) = &self.zebra {
            masks.insert("zebra".to_string(), rasterize(z, dims, cell));
        }
        if !self.lane_regions.is_empty() {
            let mut lane = Mask::empty(dims, cell);
            for r in &self.lane_regions {
                lane.union_with(&rasterize(r, dims, cell));
            }
            masks.insert("lane".to_string(), lane);
        }
        if let Some(d) = &self.divider_zones {
            for (name, p) in [("zone_a", &d.a), ("zone_b", &d.b), ("zone_c", &d.c)] {
                masks.insert(name.to_string(), rasterize(p, dims, cell));
            }
        }
        self.masks = masks;
    }

    pub fn validate(&self) -> Result<(), RoiError> {
        if (self.lane_vector.norm() - 1.0).abs() > 1e-9 {
            return Err(RoiError::InvalidZones("lane_vector must be a unit vector".into()));
        }
        if self.cell_px == 0 {
            return Err(RoiError::InvalidZones("cell_px must be positive".into()));
        }
        if let Some(s) = &self.speed_lines {
            if !(s.distance_m > 0.0) {
                return Err(RoiError::InvalidZones("speed line distance must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, RoiError> {
        serde_json::to_string_pretty(self).map_err(|e| RoiError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, RoiError> {
        let mut z: ZoneSet = serde_json::from_str(text).map_err(|e| RoiError::Json(e.to_string()))?;
        z.validate()?;
        z.rebuild_masks();
        Ok(z)
    }

    /// Whether `p` lies in the monitored carriageway.
    pub fn in_lane(&self, p: Point) -> bool {
        self.lane_regions.iter().any(|r| r.contains(p))
    }
}

fn box_hull(d: &Detection) -> Option<Polygon> {
    convex_hull(&d.bbox.corners()).ok()
}

fn union_hull<'a>(dets: impl Iterator<Item = &'a Detection>) -> Option<Polygon> {
    let pts: Vec<Point> = dets.flat_map(|d| d.bbox.corners()).collect();
    convex_hull(&pts).ok()
}

fn window(frames: &[DetectionFrame], class: ObjectClass, k: usize) -> Vec<&DetectionFrame> {
    let mut w: Vec<&DetectionFrame> = frames
        .iter()
        .rev()
        .filter(|f| f.detections.iter().any(|d| d.class == class))
        .take(k)
        .collect();
    w.reverse();
    w
}

/// Temporally averaged hull of the union of all `class` detections per frame.
fn averaged_union(frames: &[DetectionFrame], class: ObjectClass, k: usize) -> Result<Option<Polygon>, RoiError> {
    let hulls: Vec<Polygon> = window(frames, class, k)
        .into_iter()
        .filter_map(|f| union_hull(f.detections.iter().filter(|d| d.class == class)))
        .collect();
    if hulls.is_empty() {
        return Ok(None);
    }
    temporal_average(&hulls).map(Some)
}

/// Per-instance averaged hulls. Instances are keyed by the detections of the
/// most populated recent frame; every other detection joins the instance it
/// overlaps most.
fn averaged_instances(frames: &[DetectionFrame], class: ObjectClass, k: usize) -> Result<Vec<Polygon>, RoiError> {
    let win = window(frames, class, k);
    let count = |f: &DetectionFrame| f.detections.iter().filter(|d| d.class == class).count();
    let Some(reference) = win.iter().rev().max_by_key(|f| count(f)) else {
        return Ok(Vec::new());
    };
    let refs: Vec<&Detection> = reference.detections.iter().filter(|d| d.class == class).collect();
    let mut groups: Vec<Vec<Polygon>> = vec![Vec::new(); refs.len()];
    for f in &win {
        for d in f.detections.iter().filter(|d| d.class == class) {
            let best = refs
                .iter()
                .enumerate()
                .map(|(i, r)| (i, r.bbox.iou(&d.bbox)))
                .filter(|&(_, iou)| iou > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let (Some((i, _)), Some(h)) = (best, box_hull(d)) {
                groups[i].push(h);
            }
        }
    }
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| temporal_average(g))
        .collect()
}

/// Unit principal axis of the vertex cloud and the eigenvalue ratio.
fn principal_axis(points: &[Point]) -> Option<(Point, f64)> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Point::default(), |a, &p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let half_tr = (sxx + syy) / 2.0;
    let disc = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if !(l1 > 0.0) {
        return None;
    }
    let axis = if sxy == 0.0 {
        if sxx >= syy { Point::new(1.0, 0.0) } else { Point::new(0.0, 1.0) }
    } else {
        let a = Point::new(sxy, l1 - sxx);
        let b = Point::new(l1 - syy, sxy);
        if a.norm() >= b.norm() { a } else { b }
    };
    let ratio = if l2 > 0.0 { l1 / l2 } else { f64::INFINITY };
    Some((axis.normalized()?, ratio))
}

/// Fixes the sign of `axis` by majority vote of the flow displacements;
/// without a majority the dominant component is made positive.
fn orient_axis(axis: Point, flow: &[Point]) -> Point {
    let (pos, neg) = flow.iter().fold((0usize, 0usize), |(p, n), d| {
        let s = d.dot(axis);
        if s > 0.0 {
            (p + 1, n)
        } else if s < 0.0 {
            (p, n + 1)
        } else {
            (p, n)
        }
    });
    let flip = match pos.cmp(&neg) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            if axis.y.abs() >= axis.x.abs() { axis.y < 0.0 } else { axis.x < 0.0 }
        }
    };
    if flip { -axis } else { axis }
}

/// Rectangle spanning `[s0, s1]` along `u` and `[q0, q1]` along `n`.
fn frame_rect(u: Point, n: Point, s0: f64, s1: f64, q0: f64, q1: f64) -> Result<Polygon, RoiError> {
    let at = |s: f64, q: f64| u * s + n * q;
    Polygon::from_ring(vec![at(s0, q0), at(s1, q0), at(s1, q1), at(s0, q1)])
}

fn stop_line(zebra: &Polygon, lane_hull: Option<&Polygon>, lane_vector: Point) -> Segment {
    let edge = zebra
        .edges()
        .min_by(|a, b| a.midpoint().y.total_cmp(&b.midpoint().y))
        .expect("polygon has edges");
    let mut dir = edge.direction().normalized().expect("hull edges have length");
    let across = Point::new(lane_vector.y, -lane_vector.x);
    if dir.dot(across) < 0.0 {
        dir = -dir;
    }
    let origin = edge.a;
    let (t0, t1) = match lane_hull {
        Some(h) => {
            let (lo, hi) = h.extent_along(dir);
            (lo - origin.dot(dir), hi - origin.dot(dir))
        }
        None => {
            let tb = (edge.b - origin).dot(dir);
            (tb.min(0.0), tb.max(0.0))
        }
    };
    Segment::new(origin + dir * t0, origin + dir * t1)
}

fn divider_zones(
    dividers: &[Polygon],
    lane_regions: &[Polygon],
    lane_hull: &Polygon,
    u: Point,
) -> Result<Option<DividerZones>, RoiError> {
    if dividers.len() < 2 || lane_regions.is_empty() {
        return Ok(None);
    }
    let n = Point::new(u.y, -u.x);
    let lane_width =
        lane_regions.iter().map(|r| { let (lo, hi) = r.extent_along(n); hi - lo }).sum::<f64>() / lane_regions.len() as f64;
    let mut spans: Vec<((f64, f64), &Polygon)> = dividers.iter().map(|d| (d.extent_along(u), d)).collect();
    spans.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0));
    let widest = spans
        .windows(2)
        .map(|w| (w[0].0 .1, w[1].0 .0, w[0].1, w[1].1))
        .filter(|&(lo, hi, _, _)| hi > lo)
        .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)));
    let Some((g0, g1, d0, d1)) = widest else {
        return Ok(None);
    };
    let (p0a, p1a) = d0.extent_along(n);
    let (p0b, p1b) = d1.extent_along(n);
    let (q0, q1) = (p0a.min(p0b), p1a.max(p1b));
    let b = frame_rect(u, n, g0, g1, q0, q1)?;
    let low = frame_rect(u, n, g0, g1, q0 - lane_width, q0)?;
    let high = frame_rect(u, n, g0, g1, q1, q1 + lane_width)?;
    let lane_c = lane_hull.centroid();
    let (a, c) = if low.centroid().dist(lane_c) <= high.centroid().dist(lane_c) { (low, high) } else { (high, low) };
    Ok(Some(DividerZones { a, b, c }))
}

/// Derives the zone set from the calibration window.
///
/// `flow` holds frame-to-frame vehicle displacements observed during
/// calibration and fixes the sign of the lane direction.
pub fn derive_zones(
    frames: &[DetectionFrame],
    flow: &[Point],
    frame_dims: (u32, u32),
    config: &RoiConfig,
) -> Result<ZoneSet, RoiError> {
    config.validate()?;
    let calib = &frames[..frames.len().min(config.calibration_frames)];
    if !calib.iter().any(|f| f.detections.iter().any(|d| d.class.is_static())) {
        return Err(RoiError::NoStaticFeatures);
    }
    let k = config.averaging_window;

    let lane_hull = averaged_union(calib, ObjectClass::Lane, k)?.ok_or(RoiError::NoLaneFeatures)?;
    let lane_regions = averaged_instances(calib, ObjectClass::Lane, k)?;
    let (axis, ratio) = principal_axis(lane_hull.vertices()).ok_or(RoiError::AmbiguousLaneAxis(1.0))?;
    if ratio < MIN_AXIS_RATIO {
        return Err(RoiError::AmbiguousLaneAxis(ratio));
    }
    let lane_vector = orient_axis(axis, flow);

    let zebra = averaged_union(calib, ObjectClass::ZebraCrossing, k)?;
    let stop = zebra.as_ref().map(|z| stop_line(z, Some(&lane_hull), lane_vector));

    let dividers = averaged_instances(calib, ObjectClass::Divider, k)?;
    let divider_zones = divider_zones(&dividers, &lane_regions, &lane_hull, lane_vector)?;

    let n = Point::new(lane_vector.y, -lane_vector.x);
    let (lo, hi) = lane_hull.extent_along(lane_vector);
    let (q0, q1) = lane_hull.extent_along(n);
    let line_at = |f: f64| {
        let s = lo + f * (hi - lo);
        Segment::new(lane_vector * s + n * q0, lane_vector * s + n * q1)
    };
    let speed_lines = Some(SpeedLines {
        start: line_at(config.speed_anchors[0]),
        stop: line_at(config.speed_anchors[1]),
        distance_m: config.speed_distance_m,
    });

    let mut zones = ZoneSet {
        frame_dims,
        cell_px: config.raster_cell_px,
        zebra,
        stop_line: stop,
        lane_regions,
        lane_hull: Some(lane_hull),
        lane_vector,
        divider_zones,
        speed_lines,
        masks: BTreeMap::new(),
    };
    zones.rebuild_masks();
    Ok(zones)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BBox;

    fn statics(frame_index: u64, rects: &[(ObjectClass, [f64; 4])]) -> DetectionFrame {
        let mut f = DetectionFrame::new(frame_index, 0, 0);
        for &(class, r) in rects {
            f.detections.push(Detection::new(class, BBox::new(r[0], r[1], r[2] - r[0], r[3] - r[1]), 0.9));
        }
        f
    }

    #[test]
    fn stop_line_on_minimal_y_edge() {
        let f = statics(0, &[
            (ObjectClass::ZebraCrossing, [10.0, 400.0, 200.0, 440.0]),
            (ObjectClass::Lane, [0.0, 0.0, 220.0, 800.0]),
        ]);
        let z = derive_zones(&[f], &[Point::new(0.0, 3.0)], (400, 800), &RoiConfig::default()).unwrap();
        let s = z.stop_line.unwrap();
        assert_eq!(s.a, Point::new(0.0, 400.0));
        assert_eq!(s.b, Point::new(220.0, 400.0));
    }

    #[test]
    fn lane_vector_follows_majority_flow() {
        let f = statics(0, &[(ObjectClass::Lane, [100.0, 0.0, 140.0, 600.0])]);
        let down = vec![Point::new(0.0, 2.0); 5];
        let mut up = vec![Point::new(0.0, -2.0); 6];
        up.extend(&down);
        let cfg = RoiConfig::default();
        assert_eq!(derive_zones(std::slice::from_ref(&f), &down, (400, 800), &cfg).unwrap().lane_vector, Point::new(0.0, 1.0));
        assert_eq!(derive_zones(&[f], &up, (400, 800), &cfg).unwrap().lane_vector, Point::new(0.0, -1.0));
    }

    #[test]
    fn square_lane_is_ambiguous() {
        let f = statics(0, &[(ObjectClass::Lane, [0.0, 0.0, 100.0, 100.0])]);
        assert!(matches!(
            derive_zones(&[f], &[], (400, 800), &RoiConfig::default()),
            Err(RoiError::AmbiguousLaneAxis(_))
        ));
    }

    #[test]
    fn empty_calibration_rejected() {
        let f = DetectionFrame::new(0, 0, 0);
        assert_eq!(derive_zones(&[f], &[], (10, 10), &RoiConfig::default()), Err(RoiError::NoStaticFeatures));
    }

    #[test]
    fn divider_gap_yields_three_disjoint_zones() {
        let f = statics(0, &[
            (ObjectClass::Lane, [100.0, 0.0, 120.0, 600.0]),
            (ObjectClass::Lane, [120.0, 0.0, 140.0, 600.0]),
            (ObjectClass::Divider, [140.0, 0.0, 145.0, 200.0]),
            (ObjectClass::Divider, [140.0, 260.0, 145.0, 600.0]),
        ]);
        let z = derive_zones(&[f], &[Point::new(0.0, 1.0)], (400, 800), &RoiConfig::default()).unwrap();
        let d = z.divider_zones.unwrap();
        assert_eq!(d.b.centroid(), Point::new(142.5, 230.0));
        assert_eq!(d.a.centroid(), Point::new(130.0, 230.0));
        assert_eq!(d.c.centroid(), Point::new(155.0, 230.0));
        let masks = [&z.masks["zone_a"], &z.masks["zone_b"], &z.masks["zone_c"]];
        for r in 0..masks[0].rows {
            for c in 0..masks[0].cols {
                assert!(masks.iter().filter(|m| m.get(c, r)).count() <= 1);
            }
        }
    }

    #[test]
    fn json_round_trip_rebuilds_masks() {
        let f = statics(0, &[
            (ObjectClass::Lane, [100.0, 0.0, 140.0, 600.0]),
            (ObjectClass::ZebraCrossing, [100.0, 400.0, 140.0, 420.0]),
        ]);
        let z = derive_zones(&[f], &[Point::new(0.0, 1.0)], (400, 800), &RoiConfig::default()).unwrap();
        let back = ZoneSet::from_json(&z.to_json().unwrap()).unwrap();
        assert_eq!(back, z);
        assert!(back.masks["zebra"].count() > 0);
    }
}
