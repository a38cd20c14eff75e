use crate::geom::{orient, Point, Segment};
use crate::tracker::{HistoryEntry, Track};

/// Side of a directed line. Points on the line count as `Left`, which is
/// the side with non-negative orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

fn side(line: &Segment, p: Point) -> Side {
    if orient(line.a, line.b, p) >= 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub from: Side,
    pub to: Side,
    /// Motion vector of the crossing step.
    pub motion: Point,
}

impl Crossing {
    /// Whether the step moved along `direction`.
    pub fn is_along(&self, direction: Point) -> bool {
        self.motion.dot(direction) > 0.0
    }
}

/// Whether the step `prev -> curr` crosses the segment `line`.
///
/// The endpoints must fall on different sides of the line and the step must
/// straddle the line's endpoints; a point landing exactly on the line has
/// reached the `Left` side.
pub fn crossed_line(prev: Point, curr: Point, line: &Segment) -> Option<Crossing> {
    let (from, to) = (side(line, prev), side(line, curr));
    if from == to {
        return None;
    }
    let oa = orient(prev, curr, line.a);
    let ob = orient(prev, curr, line.b);
    if oa * ob > 0.0 {
        return None;
    }
    Some(Crossing { from, to, motion: curr - prev })
}

/// The last two observed history entries.
pub(crate) fn last_observed_pair(track: &Track) -> Option<(&HistoryEntry, &HistoryEntry)> {
    let mut it = track.observed().rev();
    let curr = it.next()?;
    let prev = it.next()?;
    Some((prev, curr))
}

/// Crossing on the latest observed step of `track`.
pub fn last_crossing(track: &Track, line: &Segment) -> Option<Crossing> {
    let (prev, curr) = last_observed_pair(track)?;
    crossed_line(prev.point, curr.point, line)
}

/// Observed entries with `frame_index >= since`, oldest first.
pub(crate) fn observed_since(track: &Track, since: u64) -> Vec<&HistoryEntry> {
    let mut v: Vec<&HistoryEntry> = track.observed().rev().take_while(|h| h.frame_index >= since).collect();
    v.reverse();
    v
}

/// Mean per-frame displacement over the observed entries in `[to - window, to]`.
pub(crate) fn mean_velocity(track: &Track, to: u64, window: u64) -> Option<Point> {
    let pts: Vec<&HistoryEntry> = track
        .observed()
        .filter(|h| h.frame_index <= to && h.frame_index + window >= to)
        .collect();
    let (first, last) = (pts.first()?, pts.last()?);
    let frames = last.frame_index.checked_sub(first.frame_index).filter(|&f| f > 0)?;
    Some((last.point - first.point) / frames as f64)
}
