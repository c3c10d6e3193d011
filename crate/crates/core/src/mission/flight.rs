use std::collections::VecDeque;

use crate::env::Router;
use crate::Point;

/// One kinematic step toward per-ABS targets along straight lines.
///
/// ABSs within `vmax · dt` of their target land on it; the rest advance
/// exactly `vmax · dt` toward it. When every ABS is within reach this is the
/// simultaneous-arrival case.
pub fn move_step(current: &[Point], targets: &[Point], vmax: f64, dt: f64) -> Vec<Point> {
    let d0 = vmax * dt;
    current
        .iter()
        .zip(targets)
        .map(|(&c, &t)| c.toward(t, d0))
        .collect()
}

/// Walks a polyline from `from` by at most `budget`, returning the reached
/// point and how many waypoints were passed.
fn walk(from: Point, path: &VecDeque<Point>, budget: f64) -> (Point, usize) {
    let mut pos = from;
    let mut left = budget;
    for (n, &w) in path.iter().enumerate() {
        let seg = pos.dist(w);
        if seg <= left {
            left -= seg;
            pos = w;
        } else {
            return (pos.toward(w, left), n);
        }
    }
    (pos, path.len())
}

/// Per-ABS obstacle-avoiding routes with step-wise separation keeping.
pub(crate) struct Flight<'r> {
    router: &'r Router<'r>,
    goals: Vec<Option<Point>>,
    paths: Vec<VecDeque<Point>>,
}

impl<'r> Flight<'r> {
    pub fn new(router: &'r Router<'r>, n: usize) -> Self {
        Self {
            router,
            goals: vec![None; n],
            paths: vec![VecDeque::new(); n],
        }
    }

    /// Re-plans routes for ABSs whose goal changed. Unreachable goals leave the ABS hovering.
    pub fn retarget(&mut self, current: &[Point], targets: &[Point]) {
        for (i, (&c, &t)) in current.iter().zip(targets).enumerate() {
            if self.goals[i] == Some(t) {
                continue;
            }
            self.goals[i] = Some(t);
            self.paths[i] = self
                .router
                .route(c, t)
                .map(VecDeque::from)
                .unwrap_or_default();
        }
    }

    /// Advances every ABS by up to `d0` along its route. Any ABS whose move
    /// would bring it closer than `min_sep` to another is held in place;
    /// holds are applied one at a time until all pairs are separated.
    pub fn advance(&mut self, current: &[Point], d0: f64, min_sep: f64) -> Vec<Point> {
        let n = current.len();
        let mut next = Vec::with_capacity(n);
        let mut passed = Vec::with_capacity(n);
        for (i, &c) in current.iter().enumerate() {
            let (p, k) = walk(c, &self.paths[i], d0);
            next.push(p);
            passed.push(k);
        }
        let moved = |next: &[Point], i: usize| next[i] != current[i];
        'fix: loop {
            for i in 0..n {
                for j in i + 1..n {
                    if next[i].dist(next[j]) < min_sep {
                        let hold = if moved(&next, j) { j } else { i };
                        if !moved(&next, hold) {
                            // Both stationary: nothing a hold can change.
                            continue;
                        }
                        next[hold] = current[hold];
                        passed[hold] = 0;
                        continue 'fix;
                    }
                }
            }
            break;
        }
        for (path, k) in self.paths.iter_mut().zip(passed) {
            path.drain(..k);
        }
        next
    }
}
