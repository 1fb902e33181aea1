//! Log-odds occupancy grid with the classic inverse sensor model.

use crate::error::{Error, Result};
use crate::field::{RasterMap, Scan};
use crate::model::{logistic, Measurement, Point2, DEGENERATE_RANGE};
use crate::scalar::Scalar;

/// Result of a grid lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLookup<T> {
    pub prob: T,
    pub out_of_bounds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMap<T> {
    origin: Point2<T>,
    cell_size: T,
    width: usize,
    height: usize,
    /// Row-major, row 0 at `origin.y`.
    logodds: Vec<T>,
    pub clamp: T,
    pub l_occ: T,
    pub l_free: T,
}

impl<T: Scalar> GridMap<T> {
    /// Grid with `l_occ = ln(0.7/0.3)`, `l_free = -l_occ` and clamp `±10`.
    pub fn new(origin: Point2<T>, cell_size: T, width: usize, height: usize) -> Result<Self> {
        if !(cell_size > T::zero()) || !cell_size.is_finite() || !origin.is_finite() {
            return Err(Error::invalid("grid cell size must be positive and origin finite"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        if (width as u64) * (height as u64) > crate::field::MAX_RASTER_CELLS {
            return Err(Error::Capacity(format!("{width} x {height} grid")));
        }
        let l_occ = T::lit((0.7f64 / 0.3).ln());
        Ok(GridMap {
            origin,
            cell_size,
            width,
            height,
            logodds: vec![T::zero(); width * height],
            clamp: T::lit(10.0),
            l_occ,
            l_free: -l_occ,
        })
    }

    /// Smallest grid anchored at `min` that covers `[min, max]`.
    pub fn covering(min: Point2<T>, max: Point2<T>, cell_size: T) -> Result<Self> {
        if !(max.x > min.x) || !(max.y > min.y) || !(cell_size > T::zero()) {
            return Err(Error::invalid("grid bounds are degenerate"));
        }
        let n = |extent: T| ((extent / cell_size).to_f64_lossy() - 1e-9).ceil().max(1.0) as usize;
        GridMap::new(min, cell_size, n(max.x - min.x), n(max.y - min.y))
    }

    pub fn origin(&self) -> Point2<T> {
        self.origin
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Signed cell coordinates of a map point (may lie outside the grid).
    pub fn cell_coords(&self, p: Point2<T>) -> (i64, i64) {
        let gx = ((p.x - self.origin.x) / self.cell_size).floor();
        let gy = ((p.y - self.origin.y) / self.cell_size).floor();
        (gx.to_i64().unwrap_or(i64::MIN), gy.to_i64().unwrap_or(i64::MIN))
    }

    fn flat(&self, col: i64, row: i64) -> Option<usize> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            None
        } else {
            Some(row as usize * self.width + col as usize)
        }
    }

    pub fn logodds_at_cell(&self, col: i64, row: i64) -> Option<T> {
        self.flat(col, row).map(|i| self.logodds[i])
    }

    fn bump(&mut self, col: i64, row: i64, delta: T) {
        if let Some(i) = self.flat(col, row) {
            let v = self.logodds[i] + delta;
            self.logodds[i] = v.max(-self.clamp).min(self.clamp);
        }
    }

    /// Applies one beam: `l_free` on every traversed cell before the end
    /// cell, `l_occ` on the end cell unless the beam is max-range.
    pub fn update_beam(&mut self, m: &Measurement<T>) {
        let start = m.pose().position();
        let end = m.hit_point();
        let l_free = self.l_free;
        let mut visited = Vec::new();
        self.traverse(start, end, |c, r| visited.push((c, r)));
        for (c, r) in visited {
            self.bump(c, r, l_free);
        }
        if !m.is_max_range() {
            let (c, r) = self.cell_coords(end);
            self.bump(c, r, self.l_occ);
        }
    }

    /// Updates the grid with every valid beam of `scan`; beams leaving the
    /// grid are clipped at its boundary.
    pub fn update_scan(&mut self, scan: &Scan<T>) {
        for m in scan.measurements().flatten() {
            if m.range() > T::lit(DEGENERATE_RANGE) {
                self.update_beam(&m);
            }
        }
    }

    /// Walks the cells crossed by the segment `start -> end`, in order,
    /// excluding the cell containing `end`.
    pub fn traverse<F: FnMut(i64, i64)>(&self, start: Point2<T>, end: Point2<T>, mut visit: F) {
        let (mut col, mut row) = self.cell_coords(start);
        let (end_col, end_row) = self.cell_coords(end);
        let steps = (end_col - col).unsigned_abs() + (end_row - row).unsigned_abs();
        let d = end - start;
        let axis = |d: T, p: T, o: T, idx: i64| -> (i64, T, T) {
            if d > T::zero() {
                let boundary = o + T::lit((idx + 1) as f64) * self.cell_size;
                (1, (boundary - p) / d, self.cell_size / d)
            } else if d < T::zero() {
                let boundary = o + T::lit(idx as f64) * self.cell_size;
                (-1, (boundary - p) / d, -self.cell_size / d)
            } else {
                (0, T::infinity(), T::infinity())
            }
        };
        let (step_x, mut t_max_x, t_delta_x) = axis(d.x, start.x, self.origin.x, col);
        let (step_y, mut t_max_y, t_delta_y) = axis(d.y, start.y, self.origin.y, row);
        for _ in 0..steps {
            visit(col, row);
            // the step count is the Manhattan distance, so each axis moves
            // exactly as often as it must even under rounding
            let x_left = col != end_col;
            let y_left = row != end_row;
            if x_left && (!y_left || t_max_x < t_max_y) {
                col += step_x;
                t_max_x = t_max_x + t_delta_x;
            } else {
                row += step_y;
                t_max_y = t_max_y + t_delta_y;
            }
        }
    }

    /// Occupancy probability of the containing cell; 0.5 outside the grid.
    pub fn lookup(&self, query: Point2<T>) -> GridLookup<T> {
        let (c, r) = self.cell_coords(query);
        match self.logodds_at_cell(c, r) {
            Some(l) => GridLookup {
                prob: logistic(l),
                out_of_bounds: false,
            },
            None => GridLookup {
                prob: T::lit(0.5),
                out_of_bounds: true,
            },
        }
    }

    pub fn prob_at(&self, query: Point2<T>) -> T {
        self.lookup(query).prob
    }

    /// Cell probabilities as a raster, one pixel per cell.
    pub fn to_raster(&self) -> RasterMap<T> {
        let mut values = Vec::with_capacity(self.logodds.len());
        for row in (0..self.height).rev() {
            let line = &self.logodds[row * self.width..(row + 1) * self.width];
            values.extend(line.iter().map(|&l| logistic(l)));
        }
        RasterMap {
            origin: self.origin,
            resolution: self.cell_size,
            width: self.width,
            height: self.height,
            values,
        }
    }
}
