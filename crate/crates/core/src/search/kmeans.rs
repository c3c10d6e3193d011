use rand::seq::index::sample;
use rand::Rng;

use crate::channel::associate;
use crate::gridmap::Placement;
use crate::Point;

use super::MoveConstraints;

const LLOYD_ITERS: usize = 50;
const LLOYD_TOL: f64 = 1e-3;
const RESTARTS: usize = 32;

/// Lloyd's K-means seeded with `n` distinct GU positions.
pub fn kmeans<R: Rng + ?Sized>(points: &[Point], n: usize, rng: &mut R) -> Vec<Point> {
    if points.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut centroids: Vec<Point> = if points.len() >= n {
        sample(rng, points.len(), n)
            .iter()
            .map(|i| points[i])
            .collect()
    } else {
        (0..n)
            .map(|_| points[rng.random_range(0..points.len())])
            .collect()
    };
    for _ in 0..LLOYD_ITERS {
        let mut sum = vec![Point::new(0.0, 0.0); n];
        let mut cnt = vec![0usize; n];
        for &p in points {
            let j = (0..n)
                .min_by(|&a, &b| p.dist_sq(centroids[a]).total_cmp(&p.dist_sq(centroids[b])))
                .expect("n > 0");
            sum[j] = sum[j] + p;
            cnt[j] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..n {
            if cnt[j] > 0 {
                let c = sum[j] * (1.0 / cnt[j] as f64);
                shift = shift.max(c.dist(centroids[j]));
                centroids[j] = c;
            }
        }
        if shift < LLOYD_TOL {
            break;
        }
    }
    centroids
}

/// Greedy snapping of target positions to feasible, mutually compatible
/// cells: each ABS in turn takes the nearest cell it may occupy. An ABS with
/// no admissible cell keeps the cell it is in.
pub fn snap_to_cells(targets: &[Point], c: &MoveConstraints) -> Placement {
    let grid = c.grid;
    let w = grid.cell_side();
    let mut cells: Vec<usize> = Vec::with_capacity(targets.len());
    for (i, &t) in targets.iter().enumerate() {
        let home = grid.cell_of(t);
        let mut best: Option<(f64, usize)> = None;
        for r in 0..grid.k {
            if best.is_some_and(|(d, _)| (r as f64 - 0.5) * w > d) {
                break;
            }
            for cell in grid.neighbourhood(home, r) {
                if grid.chebyshev(cell, home) != r || !c.cell_ok(i, cell) {
                    continue;
                }
                if !cells.iter().all(|&o| c.pair_ok(cell, o)) {
                    continue;
                }
                let d = grid.center(cell).dist(t);
                if best.is_none_or(|(bd, bc)| d < bd || (d == bd && cell < bc)) {
                    best = Some((d, cell));
                }
            }
        }
        cells.push(best.map_or_else(|| grid.cell_of(c.prev[i]), |(_, cell)| cell));
    }
    Placement::new(cells)
}

/// Constrained K-means placement: centroids of the GUs, matched one-to-one to
/// the ABSs by minimum total squared displacement and snapped to cell centres.
/// Restarts with fresh seeds while the snapped set breaks a constraint; after
/// the last restart the centroids are pulled into each ABS's reach and
/// snapped greedily.
pub fn ckmeans_init<R: Rng + ?Sized>(
    gus: &[Point],
    c: &MoveConstraints,
    rng: &mut R,
) -> Vec<Point> {
    let n = c.n_abs();
    if n == 0 {
        return Vec::new();
    }
    if gus.is_empty() {
        return snap_to_cells(&c.prev, c).positions(&c.grid);
    }
    let mut ordered = c.prev.clone();
    for _ in 0..RESTARTS {
        let centroids = kmeans(gus, n, rng);
        let matching = associate(&centroids, &c.prev, 1).expect("n centroids serve n ABSs");
        for (i, &j) in matching.gu_to_abs.iter().enumerate() {
            ordered[i] = centroids[j];
        }
        let placement = Placement::new(ordered.iter().map(|&p| c.grid.cell_of(p)).collect());
        if c.placement_ok(&placement) {
            return placement.positions(&c.grid);
        }
    }
    let pulled: Vec<Point> = ordered
        .iter()
        .zip(&c.prev)
        .map(|(&t, &p)| {
            let d = t.dist(p);
            if d > c.max_disp {
                p.toward(t, c.max_disp)
            } else {
                t
            }
        })
        .collect();
    snap_to_cells(&pulled, c).positions(&c.grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::gridmap::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open() -> Environment {
        Environment::new(1000.0, 31.25, 60.0, 1.0, vec![]).unwrap()
    }

    #[test]
    fn single_abs_goes_to_mean() {
        let env = open();
        let grid = Grid::new(64, 1000.0).unwrap();
        let gus = vec![
            Point::new(100.0, 100.0),
            Point::new(300.0, 100.0),
            Point::new(200.0, 400.0),
        ];
        let c = MoveConstraints::new(
            &env,
            grid,
            vec![Point::new(600.0, 600.0)],
            f64::INFINITY,
            10.0,
        )
        .unwrap();
        let out = ckmeans_init(&gus, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(grid.cell_of(out[0]), grid.cell_of(Point::new(200.0, 200.0)));
    }

    #[test]
    fn projected_when_out_of_reach() {
        let env = open();
        let grid = Grid::new(64, 1000.0).unwrap();
        let gus = vec![Point::new(900.0, 900.0)];
        let start = grid.center(grid.cell_of(Point::new(100.0, 100.0)));
        let c = MoveConstraints::new(&env, grid, vec![start], 100.0, 10.0).unwrap();
        let out = ckmeans_init(&gus, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(out[0].dist(start) <= 100.0 + 1e-9);
        assert!(out[0].dist(start) > 80.0);
    }

    #[test]
    fn fixed_point_at_centroids() {
        let env = open();
        let grid = Grid::new(64, 1000.0).unwrap();
        let centres = [grid.center(200), grid.center(2100), grid.center(3900)];
        let mut gus = Vec::new();
        for c in centres {
            for (dx, dy) in [(-3.0, 0.0), (3.0, 0.0), (0.0, -3.0), (0.0, 3.0)] {
                gus.push(Point::new(c.x + dx, c.y + dy));
            }
        }
        let c = MoveConstraints::new(&env, grid, centres.to_vec(), 140.0, 10.0).unwrap();
        let out = ckmeans_init(&gus, &c, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(out, centres.to_vec());
    }

    #[test]
    fn snapping_skips_taken_cells() {
        let env = open();
        let grid = Grid::new(10, 1000.0).unwrap();
        let t = grid.center(55);
        let c = MoveConstraints::new(&env, grid, vec![t, t], 500.0, 10.0).unwrap();
        let p = snap_to_cells(&[t, t], &c);
        assert_eq!(p.cells[0], 55);
        assert_ne!(p.cells[1], 55);
        assert_eq!(grid.chebyshev(p.cells[1], 55), 1);
    }
}
