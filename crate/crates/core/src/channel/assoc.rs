//! Capacity-constrained GU-to-ABS association.
//!
//! The assignment minimizing total squared distance subject to a per-ABS
//! size cap is a min-cost flow on the bipartite network
//! `source → GU → ABS → sink` (unit GU supplies, ABS capacities `max_size`).
//! It is solved by successive shortest paths, one GU unit at a time. Because
//! every GU has an edge to every ABS, the residual network collapses onto the
//! ABS nodes: an augmenting path enters some ABS and then shifts one member
//! GU per hop until it reaches an ABS with spare capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub gu_to_abs: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub max_size: usize,
}

/// `⌊(1 + ε)·M / N⌋`.
pub fn max_cluster_size(n_gus: usize, n_abs: usize, slack: f64) -> usize {
    if n_abs == 0 {
        return 0;
    }
    ((1.0 + slack) * n_gus as f64 / n_abs as f64 + 1e-9).floor() as usize
}

/// Minimum total squared-distance association with cluster sizes capped at `max_size`.
pub fn associate(abs_pos: &[Point], gu_pos: &[Point], max_size: usize) -> Result<Association> {
    let n = abs_pos.len();
    let mut cost = Vec::with_capacity(gu_pos.len() * n);
    for g in gu_pos {
        cost.extend(abs_pos.iter().map(|a| a.dist_sq(*g)));
    }
    associate_costs(&cost, gu_pos.len(), n, max_size)
}

/// Same as [`associate`] on an explicit row-major `M×N` cost matrix.
pub fn associate_costs(cost: &[f64], m: usize, n: usize, max_size: usize) -> Result<Association> {
    if cost.len() != m * n {
        return Err(Error::Shape(format!(
            "cost matrix has {} entries, expected {m}×{n}",
            cost.len()
        )));
    }
    if m > 0 && n.saturating_mul(max_size) < m {
        return Err(Error::Capacity(format!(
            "{n} ABSs × {max_size} slots cannot serve {m} GUs"
        )));
    }
    let c = |g: usize, a: usize| cost[g * n + a];
    // Relaxations must beat this margin so rounding cannot turn exactly
    // tied (zero-cost) residual cycles into negative ones.
    let tol = 1e-9 * (1.0 + cost.iter().fold(0.0f64, |m, &x| m.max(x.abs())));
    let mut gu_to_abs = vec![usize::MAX; m];
    let mut sizes = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];

    let mut dist = vec![0.0f64; n];
    let mut via: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut edge: Vec<Option<(f64, usize)>> = vec![None; n * n];

    for g in 0..m {
        let nearest = (0..n)
            .min_by(|&a, &b| c(g, a).total_cmp(&c(g, b)).then(a.cmp(&b)))
            .expect("n > 0");
        if sizes[nearest] < max_size {
            gu_to_abs[g] = nearest;
            sizes[nearest] += 1;
            members[nearest].push(g);
            continue;
        }

        // Cheapest single-member shift u → v for each full ABS u.
        for u in 0..n {
            for v in 0..n {
                edge[u * n + v] = None;
                if u == v || sizes[u] < max_size {
                    continue;
                }
                edge[u * n + v] = members[u]
                    .iter()
                    .map(|&mm| (c(mm, v) - c(mm, u), mm))
                    .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            }
        }
        // Bellman-Ford toward the set of ABSs with spare capacity.
        for u in 0..n {
            dist[u] = if sizes[u] < max_size {
                0.0
            } else {
                f64::INFINITY
            };
            via[u] = None;
        }
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if sizes[u] < max_size {
                    continue;
                }
                for v in 0..n {
                    if let Some((w, mm)) = edge[u * n + v] {
                        let cand = w + dist[v];
                        if cand < dist[u] - tol {
                            dist[u] = cand;
                            via[u] = Some((v, mm));
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let entry = (0..n)
            .filter(|&a| dist[a].is_finite())
            .min_by(|&a, &b| {
                (c(g, a) + dist[a])
                    .total_cmp(&(c(g, b) + dist[b]))
                    .then(a.cmp(&b))
            })
            .ok_or_else(|| Error::Capacity("no augmenting path".into()))?;

        gu_to_abs[g] = entry;
        members[entry].push(g);
        sizes[entry] += 1;
        let mut u = entry;
        let mut hops = 0;
        while sizes[u] > max_size {
            let broken = || Error::Capacity("inconsistent augmenting path".into());
            let (v, mm) = via[u].ok_or_else(broken)?;
            let pos = members[u]
                .iter()
                .position(|&x| x == mm)
                .ok_or_else(broken)?;
            members[u].remove(pos);
            sizes[u] -= 1;
            members[v].push(mm);
            sizes[v] += 1;
            gu_to_abs[mm] = v;
            u = v;
            hops += 1;
            if hops > n {
                return Err(broken());
            }
        }
    }
    Ok(Association {
        gu_to_abs,
        cluster_sizes: sizes,
        max_size,
    })
}

/// Total squared distance of an association.
pub fn association_cost(abs_pos: &[Point], gu_pos: &[Point], assoc: &Association) -> f64 {
    gu_pos
        .iter()
        .zip(&assoc.gu_to_abs)
        .map(|(g, &a)| abs_pos[a].dist_sq(*g))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over all capacity-feasible assignments.
    fn brute_force(abs: &[Point], gus: &[Point], cap: usize) -> f64 {
        let n = abs.len();
        let m = gus.len();
        let mut best = f64::INFINITY;
        let total = n.pow(m as u32);
        for code in 0..total {
            let mut sizes = vec![0; n];
            let mut c = code;
            let mut cost = 0.0;
            for g in gus {
                let a = c % n;
                c /= n;
                sizes[a] += 1;
                cost += abs[a].dist_sq(*g);
            }
            if sizes.iter().all(|&s| s <= cap) && cost < best {
                best = cost;
            }
        }
        best
    }

    #[test]
    fn identity_when_unconstrained_optimum_is_feasible() {
        let abs = [Point::new(0.0, 0.0), Point::new(100.0, 0.0)];
        let gus = [Point::new(95.0, 3.0), Point::new(2.0, 1.0)];
        let a = associate(&abs, &gus, 1).unwrap();
        assert_eq!(a.gu_to_abs, vec![1, 0]);
        assert_eq!(a.cluster_sizes, vec![1, 1]);
    }

    #[test]
    fn max_size_formula() {
        assert_eq!(max_cluster_size(100, 5, 0.2), 24);
        assert_eq!(max_cluster_size(20, 2, 0.2), 12);
        assert_eq!(max_cluster_size(10, 3, 0.0), 3);
    }

    #[test]
    fn coincident_points_tie_without_cycling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=8 {
            let abs: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
                .collect();
            let same = vec![Point::new(500.0, 500.0); n];
            let a = associate(&abs, &same, 1).unwrap();
            assert!(a.cluster_sizes.iter().all(|&s| s == 1));
            let a = associate(&same, &abs, 1).unwrap();
            assert!(a.cluster_sizes.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn infeasible_capacity() {
        let abs = [Point::new(0.0, 0.0)];
        let gus = [Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(matches!(associate(&abs, &gus, 1), Err(Error::Capacity(_))));
        assert!(matches!(associate(&[], &gus, 5), Err(Error::Capacity(_))));
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.random_range(1..=3);
            let m: usize = rng.random_range(1..=8);
            let cap = rng.random_range(m.div_ceil(n)..=m);
            let abs: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect();
            let gus: Vec<Point> = (0..m)
                .map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect();
            let a = associate(&abs, &gus, cap).unwrap();
            assert!(a.cluster_sizes.iter().all(|&s| s <= cap));
            assert_eq!(a.cluster_sizes.iter().sum::<usize>(), m);
            let got = association_cost(&abs, &gus, &a);
            let want = brute_force(&abs, &gus, cap);
            assert!(
                (got - want).abs() <= 1e-9 * want.max(1.0),
                "got {got} want {want}"
            );
        }
    }
}
