//! Uniform bin index over building footprints with a grid walk for segments.

use crate::geom::Rect;
use crate::Point;

#[derive(Clone, Debug)]
pub(crate) struct BinIndex {
    bins: usize,
    bin_side: f64,
    cells: Vec<Vec<u32>>,
}

impl BinIndex {
    pub(crate) fn build(
        area_side: f64,
        bins: usize,
        rects: impl Iterator<Item = (usize, Rect<f64>)>,
    ) -> Self {
        let bin_side = area_side / bins as f64;
        let mut cells = vec![Vec::new(); bins * bins];
        for (id, r) in rects {
            // Closed overlap: a footprint touching a bin edge is listed in both bins.
            let lo_x = ((r.min.x / bin_side).floor() as isize - 1).max(0) as usize;
            let lo_y = ((r.min.y / bin_side).floor() as isize - 1).max(0) as usize;
            let hi_x = ((r.max.x / bin_side).floor() as usize + 1).min(bins - 1);
            let hi_y = ((r.max.y / bin_side).floor() as usize + 1).min(bins - 1);
            for by in lo_y..=hi_y {
                for bx in lo_x..=hi_x {
                    let cell = Rect::new(
                        Point::new(bx as f64 * bin_side, by as f64 * bin_side),
                        Point::new((bx + 1) as f64 * bin_side, (by + 1) as f64 * bin_side),
                    );
                    if cell.touches(&r) {
                        cells[by * bins + bx].push(id as u32);
                    }
                }
            }
        }
        Self {
            bins,
            bin_side,
            cells,
        }
    }

    #[inline]
    fn coord(&self, v: f64) -> usize {
        ((v / self.bin_side).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub(crate) fn candidates_at(&self, p: Point) -> &[u32] {
        &self.cells[self.coord(p.y) * self.bins + self.coord(p.x)]
    }

    /// Visits the bins crossed by segment `a`–`b` in order; `visit` returns
    /// `true` to stop early.
    pub(crate) fn walk_segment(&self, a: Point, b: Point, mut visit: impl FnMut(&[u32]) -> bool) {
        let (mut ix, mut iy) = (self.coord(a.x) as isize, self.coord(a.y) as isize);
        let (ex, ey) = (self.coord(b.x) as isize, self.coord(b.y) as isize);
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let s = self.bin_side;
        let step_x: isize = if dx > 0.0 { 1 } else { -1 };
        let step_y: isize = if dy > 0.0 { 1 } else { -1 };
        let mut t_max_x = if dx > 0.0 {
            ((ix + 1) as f64 * s - a.x) / dx
        } else if dx < 0.0 {
            (ix as f64 * s - a.x) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            ((iy + 1) as f64 * s - a.y) / dy
        } else if dy < 0.0 {
            (iy as f64 * s - a.y) / dy
        } else {
            f64::INFINITY
        };
        let t_dx = if dx != 0.0 {
            s / dx.abs()
        } else {
            f64::INFINITY
        };
        let t_dy = if dy != 0.0 {
            s / dy.abs()
        } else {
            f64::INFINITY
        };
        let n = self.bins as isize;
        loop {
            if visit(&self.cells[(iy * n + ix) as usize]) {
                return;
            }
            if (ix == ex && iy == ey) || (t_max_x > 1.0 && t_max_y > 1.0) {
                return;
            }
            if t_max_x < t_max_y {
                ix += step_x;
                t_max_x += t_dx;
            } else {
                iy += step_y;
                t_max_y += t_dy;
            }
            if ix < 0 || iy < 0 || ix >= n || iy >= n {
                return;
            }
        }
    }
}
