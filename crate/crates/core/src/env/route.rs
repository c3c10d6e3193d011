//! Obstacle-avoiding flight routes at the ABS altitude.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::Rect;
use crate::Point;

use super::Environment;

/// Plans planar polylines that stay clear of obstacle airspace.
///
/// Routes are straight lines when the direct segment is clear; otherwise an
/// A* search over a lattice of free cells (cell side = building footprint side)
/// is shortened by greedy line-of-sight pruning.
pub struct Router<'a> {
    env: &'a Environment,
    n: usize,
    cell: f64,
    blocked: Vec<bool>,
}

#[derive(Copy, Clone, PartialEq)]
struct Node {
    f: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then(o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl<'a> Router<'a> {
    pub fn new(env: &'a Environment) -> Self {
        let n = (env.area_side() / env.footprint_side()).ceil().max(1.0) as usize;
        let cell = env.area_side() / n as f64;
        let mut blocked = vec![false; n * n];
        for o in env.obstacles() {
            let f = o.footprint();
            for (i, b) in blocked.iter_mut().enumerate() {
                let (r, c) = (i / n, i % n);
                let rect = Rect::new(
                    Point::new(c as f64 * cell, r as f64 * cell),
                    Point::new((c + 1) as f64 * cell, (r + 1) as f64 * cell),
                );
                if rect.overlaps_interior(&f) {
                    *b = true;
                }
            }
        }
        Self {
            env,
            n,
            cell,
            blocked,
        }
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let c = ((p.x / self.cell).floor().max(0.0) as usize).min(self.n - 1);
        let r = ((p.y / self.cell).floor().max(0.0) as usize).min(self.n - 1);
        (r, c)
    }

    fn center(&self, idx: usize) -> Point {
        let (r, c) = (idx / self.n, idx % self.n);
        Point::new((c as f64 + 0.5) * self.cell, (r as f64 + 0.5) * self.cell)
    }

    /// Nearest free lattice cell whose center is visible from `p`.
    fn anchor(&self, p: Point) -> Option<usize> {
        let (r0, c0) = self.cell_of(p);
        let n = self.n as isize;
        for radius in 0..=2isize {
            let mut best: Option<(f64, usize)> = None;
            for dr in -radius..=radius {
                for dc in -radius..=radius {
                    if dr.abs().max(dc.abs()) != radius {
                        continue;
                    }
                    let (r, c) = (r0 as isize + dr, c0 as isize + dc);
                    if r < 0 || c < 0 || r >= n || c >= n {
                        continue;
                    }
                    let idx = (r * n + c) as usize;
                    if self.blocked[idx] || !self.env.flight_segment_clear(p, self.center(idx)) {
                        continue;
                    }
                    let d = p.dist(self.center(idx));
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, idx));
                    }
                }
            }
            if let Some((_, idx)) = best {
                return Some(idx);
            }
        }
        None
    }

    fn astar(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        let n = self.n;
        let mut g = vec![f64::INFINITY; n * n];
        let mut parent = vec![usize::MAX; n * n];
        let mut heap = BinaryHeap::new();
        let h = |i: usize| {
            let (r, c) = (i / n, i % n);
            let (gr, gc) = (goal / n, goal % n);
            let (dr, dc) = (r.abs_diff(gr) as f64, c.abs_diff(gc) as f64);
            (dr.max(dc) + (std::f64::consts::SQRT_2 - 1.0) * dr.min(dc)) * self.cell
        };
        g[start] = 0.0;
        heap.push(Node {
            f: h(start),
            idx: start,
        });
        while let Some(Node { f, idx }) = heap.pop() {
            if idx == goal {
                let mut path = vec![goal];
                let mut cur = goal;
                while cur != start {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            if f > g[idx] + h(idx) + 1e-9 {
                continue;
            }
            let (r, c) = ((idx / n) as isize, (idx % n) as isize);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= n as isize || nc >= n as isize {
                        continue;
                    }
                    let nidx = (nr as usize) * n + nc as usize;
                    if self.blocked[nidx] {
                        continue;
                    }
                    if dr != 0 && dc != 0 {
                        // No corner cutting: both orthogonal neighbours must be free.
                        let a = (r as usize) * n + nc as usize;
                        let b = (nr as usize) * n + c as usize;
                        if self.blocked[a] || self.blocked[b] {
                            continue;
                        }
                    }
                    let step = if dr != 0 && dc != 0 {
                        std::f64::consts::SQRT_2 * self.cell
                    } else {
                        self.cell
                    };
                    let cand = g[idx] + step;
                    if cand < g[nidx] {
                        g[nidx] = cand;
                        parent[nidx] = idx;
                        heap.push(Node {
                            f: cand + h(nidx),
                            idx: nidx,
                        });
                    }
                }
            }
        }
        None
    }

    /// Waypoints from `from` to `to` (excluding `from`, ending exactly at `to`),
    /// or `None` when `to` cannot be reached.
    pub fn route(&self, from: Point, to: Point) -> Option<Vec<Point>> {
        if from == to {
            return Some(vec![to]);
        }
        if self.env.flight_segment_clear(from, to) {
            return Some(vec![to]);
        }
        let start = self.anchor(from)?;
        let goal = self.anchor(to)?;
        let cells = self.astar(start, goal)?;
        let mut raw = Vec::with_capacity(cells.len() + 2);
        raw.push(from);
        raw.extend(cells.into_iter().map(|i| self.center(i)));
        raw.push(to);
        let mut out = Vec::new();
        let mut i = 0;
        while i + 1 < raw.len() {
            let mut j = raw.len() - 1;
            while j > i + 1 && !self.env.flight_segment_clear(raw[i], raw[j]) {
                j -= 1;
            }
            if !self.env.flight_segment_clear(raw[i], raw[j]) {
                return None;
            }
            out.push(raw[j]);
            i = j;
        }
        Some(out)
    }
}

/// Total length of the polyline `from → waypoints…`.
pub fn path_length(from: Point, waypoints: &[Point]) -> f64 {
    let mut prev = from;
    let mut total = 0.0;
    for &w in waypoints {
        total += prev.dist(w);
        prev = w;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, BuildingBlock, EnvironmentParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn direct_route_when_clear() {
        let env = Environment::new(1000.0, 31.25, 60.0, 1.0, vec![]).unwrap();
        let r = Router::new(&env);
        let to = Point::new(900.0, 900.0);
        assert_eq!(r.route(Point::new(1.0, 1.0), to), Some(vec![to]));
    }

    #[test]
    fn detours_around_wall() {
        // A wall of tall blocks between the endpoints with a gap at the top.
        let walls = (0..30)
            .map(|i| BuildingBlock {
                origin: Point::new(500.0, i as f64 * 31.25),
                side: 31.25,
                height: 80.0,
            })
            .collect();
        let env = Environment::new(1000.0, 31.25, 60.0, 1.0, walls).unwrap();
        let r = Router::new(&env);
        let from = Point::new(400.0, 100.0);
        let to = Point::new(600.0, 100.0);
        let path = r.route(from, to).unwrap();
        assert_eq!(*path.last().unwrap(), to);
        let mut prev = from;
        for &w in &path {
            assert!(env.flight_segment_clear(prev, w));
            prev = w;
        }
        assert!(path_length(from, &path) > 1500.0);
    }

    #[test]
    fn random_routes_are_clear() {
        let env = generate_environment(
            &EnvironmentParams::default(),
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let r = Router::new(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draw = |rng: &mut ChaCha8Rng| loop {
            let p = Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            if env.abs_position_valid(p) {
                break p;
            }
        };
        let mut routed = 0;
        for _ in 0..200 {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            if let Some(path) = r.route(a, b) {
                routed += 1;
                let mut prev = a;
                for &w in &path {
                    assert!(env.flight_segment_clear(prev, w));
                    prev = w;
                }
                assert_eq!(*path.last().unwrap(), b);
            }
        }
        assert!(routed > 180);
    }
}
