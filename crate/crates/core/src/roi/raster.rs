use super::polygon::Polygon;
use crate::geom::Point;

/// Binary raster over the frame, one cell per `cell_px` x `cell_px` pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub cols: usize,
    pub rows: usize,
    pub cell_px: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(frame_dims: (u32, u32), cell_px: u32) -> Self {
        let cell = cell_px.max(1);
        let cols = frame_dims.0.div_ceil(cell) as usize;
        let rows = frame_dims.1.div_ceil(cell) as usize;
        Self { cols, rows, cell_px: cell, bits: vec![false; cols * rows] }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn cell_area(&self) -> f64 {
        f64::from(self.cell_px) * f64::from(self.cell_px)
    }

    /// Whether the cell holding pixel `p` is set.
    pub fn contains_point(&self, p: Point) -> bool {
        if p.x < 0.0 || p.y < 0.0 {
            return false;
        }
        let c = (p.x / f64::from(self.cell_px)) as usize;
        let r = (p.y / f64::from(self.cell_px)) as usize;
        c < self.cols && r < self.rows && self.get(c, r)
    }

    pub fn union_with(&mut self, other: &Mask) {
        debug_assert_eq!((self.cols, self.rows), (other.cols, other.rows));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }
}

/// Sets each cell whose center lies inside `polygon` (even-odd rule).
pub fn rasterize(polygon: &Polygon, frame_dims: (u32, u32), cell_px: u32) -> Mask {
    let mut mask = Mask::empty(frame_dims, cell_px);
    let cell = f64::from(mask.cell_px);
    let (lo_x, hi_x) = polygon.extent_along(Point::new(1.0, 0.0));
    let (lo_y, hi_y) = polygon.extent_along(Point::new(0.0, 1.0));
    let col_range = index_range(lo_x, hi_x, cell, mask.cols);
    let row_range = index_range(lo_y, hi_y, cell, mask.rows);
    for r in row_range {
        let cy = (r as f64 + 0.5) * cell;
        for c in col_range.clone() {
            let cx = (c as f64 + 0.5) * cell;
            if polygon.contains_even_odd(Point::new(cx, cy)) {
                mask.set(c, r, true);
            }
        }
    }
    mask
}

/// Cells whose centers can fall within `[lo, hi]`.
fn index_range(lo: f64, hi: f64, cell: f64, n: usize) -> std::ops::Range<usize> {
    let start = ((lo / cell - 0.5).floor().max(0.0)) as usize;
    let end = (((hi / cell - 0.5).ceil() + 1.0).max(0.0) as usize).min(n);
    start.min(n)..end
}
