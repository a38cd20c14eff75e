use serde::{Deserialize, Serialize};

use super::RoiError;
use crate::geom::{orient, Point, Segment};

/// Simple polygon with positive signed area in the (x, y) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = RoiError;
    fn try_from(v: Vec<Point>) -> Result<Self, RoiError> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() / 2.0
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (o1 == 0.0 && on(a, b, c))
        || (o2 == 0.0 && on(a, b, d))
        || (o3 == 0.0 && on(c, d, a))
        || (o4 == 0.0 && on(c, d, b))
}

impl Polygon {
    /// Validates vertex count, simplicity and orientation.
    pub fn new(vertices: Vec<Point>) -> Result<Self, RoiError> {
        let n = vertices.len();
        if n < 3 {
            return Err(RoiError::InvalidPolygon(format!("{n} vertices")));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(RoiError::InvalidPolygon("non-finite vertex".into()));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(RoiError::InvalidPolygon("signed area is not positive".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(RoiError::InvalidPolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, RoiError> {
        Self::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    /// Builds a polygon from a ring of either orientation.
    pub fn from_ring(mut vertices: Vec<Point>) -> Result<Self, RoiError> {
        if vertices.len() >= 3 && signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|e| e.length()).sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let n = v.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (p, q) = (v[i], v[(i + 1) % n]);
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        let k = 6.0 * self.area();
        Point::new(cx / k, cy / k)
    }

    pub fn translate(&self, t: Point) -> Polygon {
        Polygon { vertices: self.vertices.iter().map(|&p| p + t).collect() }
    }

    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| orient(v[i], v[(i + 1) % n], v[(i + 2) % n]) >= 0.0)
    }

    /// Crossing-number test with half-open edges; points exactly on the
    /// boundary may land on either side.
    pub fn contains_even_odd(&self, p: Point) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges().any(|e| {
            orient(e.a, e.b, p) == 0.0
                && p.x >= e.a.x.min(e.b.x)
                && p.x <= e.a.x.max(e.b.x)
                && p.y >= e.a.y.min(e.b.y)
                && p.y <= e.a.y.max(e.b.y)
        })
    }

    /// Closed containment: interior or boundary.
    pub fn contains(&self, p: Point) -> bool {
        self.on_boundary(p) || self.contains_even_odd(p)
    }

    /// (min, max) of the vertices projected on `axis`.
    pub fn extent_along(&self, axis: Point) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = p.dot(axis);
            (lo.min(s), hi.max(s))
        })
    }
}

/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull(points: &[Point]) -> Result<Polygon, RoiError> {
    let mut pts: Vec<Point> = points.to_vec();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(RoiError::DegenerateInput);
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(RoiError::DegenerateInput);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        // the last point of each chain starts the next one
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(RoiError::DegenerateInput);
    }
    Polygon::new(hull)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn square_with_center_keeps_corners() {
        let h = convex_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)])).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h.area(), 1.0);
    }

    #[test]
    fn triangle_is_itself() {
        let h = convex_hull(&pts(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)])).unwrap();
        assert_eq!(h.len(), 3);
        assert!(h.area() > 0.0);
    }

    #[test]
    fn collinear_points_excluded_or_rejected() {
        let h = convex_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)])).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(
            convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])),
            Err(RoiError::DegenerateInput)
        );
        assert_eq!(convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0)])), Err(RoiError::DegenerateInput));
    }

    #[test]
    fn rejects_clockwise_and_bowtie() {
        assert!(Polygon::new(pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])).is_err());
        assert!(Polygon::new(pts(&[(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0)])).is_err());
        assert!(Polygon::from_ring(pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])).is_ok());
    }

    #[test]
    fn closed_containment_includes_boundary() {
        let r = Polygon::rect(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(r.contains(Point::new(10.0, 5.0)));
        assert!(r.contains(Point::new(0.0, 0.0)));
        assert!(r.contains(Point::new(5.0, 5.0)));
        assert!(!r.contains(Point::new(10.1, 5.0)));
        assert_eq!(r.centroid(), Point::new(5.0, 5.0));
    }

    #[test]
    fn json_round_trip_validates() {
        let r = Polygon::rect(0.0, 0.0, 2.0, 1.0).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "[[0.0,0.0],[2.0,0.0],[2.0,1.0],[0.0,1.0]]");
        assert_eq!(serde_json::from_str::<Polygon>(&s).unwrap(), r);
        assert!(serde_json::from_str::<Polygon>("[[0,0],[1,1]]").is_err());
    }
}
