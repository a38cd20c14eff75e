use super::polygon::{convex_hull, Polygon};
use super::RoiError;
use crate::geom::Point;

/// Boundary samples per hull when vertex counts differ across the window.
pub const RESAMPLE_POINTS: usize = 64;

/// `m` points equally spaced by arc length, starting at vertex 0.
pub fn resample(poly: &Polygon, m: usize) -> Vec<Point> {
    let v = poly.vertices();
    let n = v.len();
    let total = poly.perimeter();
    let step = total / m as f64;
    let mut out = Vec::with_capacity(m);
    let mut edge = 0;
    let mut walked = 0.0;
    for k in 0..m {
        let target = k as f64 * step;
        loop {
            let len = v[edge].dist(v[(edge + 1) % n]);
            if walked + len >= target || edge == n - 1 {
                let f = if len > 0.0 { ((target - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
                out.push(v[edge] + (v[(edge + 1) % n] - v[edge]) * f);
                break;
            }
            walked += len;
            edge += 1;
        }
    }
    out
}

/// Cyclic shift of `ring` that best matches `reference` in squared distance.
fn best_shift(reference: &[Point], ring: &[Point]) -> usize {
    let m = reference.len();
    (0..m)
        .map(|s| {
            let cost: f64 = (0..m).map(|i| {
                let d = ring[(i + s) % m] - reference[i];
                d.dot(d)
            })
            .sum();
            (s, cost)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(s, _)| s)
}

/// Mean hull of a window of per-frame hulls.
///
/// Hulls with equal vertex counts are averaged vertex by vertex; otherwise
/// each is resampled to [`RESAMPLE_POINTS`] boundary points. Either way the
/// rings are put in correspondence by the cyclic shift closest to the first
/// hull, and the result is the hull of the mean points.
pub fn temporal_average(hulls: &[Polygon]) -> Result<Polygon, RoiError> {
    let first = hulls.first().ok_or(RoiError::EmptyWindow)?;
    if hulls.iter().all(|h| h == first) {
        return Ok(first.clone());
    }
    let same_count = hulls.iter().all(|h| h.len() == first.len());
    let rings: Vec<Vec<Point>> = if same_count {
        hulls.iter().map(|h| h.vertices().to_vec()).collect()
    } else {
        hulls.iter().map(|h| resample(h, RESAMPLE_POINTS)).collect()
    };
    let reference = &rings[0];
    let m = reference.len();
    let mut sum = vec![Point::default(); m];
    for ring in &rings {
        let s = best_shift(reference, ring);
        for (i, acc) in sum.iter_mut().enumerate() {
            *acc = *acc + ring[(i + s) % m];
        }
    }
    let k = rings.len() as f64;
    let mean: Vec<Point> = sum.into_iter().map(|p| p / k).collect();
    convex_hull(&mean)
}
