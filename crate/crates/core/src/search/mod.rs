//! Per-period placement planners.
//!
//! Every planner works on ABS-ordered [`Placement`]s so that the movement
//! budget can be checked per ABS; the order-free [`PatternSequence`] of a
//! placement is its identity for deduplication and memoised scoring.
//!
//! [`PatternSequence`]: crate::gridmap::PatternSequence

mod elites;
mod ges;
mod kmeans;

pub use elites::{map_elites, Archive, Elite, EliteOutcome};
pub use ges::{ges, ges_radius, GES_MAX_TUPLES};
pub use kmeans::{ckmeans_init, kmeans, snap_to_cells};

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gridmap::{FeatureNiche, Grid, Pattern, Placement};
use crate::predictor::CoveragePredictor;
use crate::Point;

/// Resampling attempts per ABS in [`mutate`].
pub const MUTATION_TRIES: usize = 16;

/// Movement limits for one planning call.
#[derive(Clone, Debug)]
pub struct MoveConstraints<'a> {
    pub env: &'a Environment,
    pub grid: Grid,
    /// ABS positions the plan starts from.
    pub prev: Vec<Point>,
    /// Largest straight-line displacement allowed for any ABS.
    pub max_disp: f64,
    /// Minimum pairwise ABS separation.
    pub min_sep: f64,
}

impl<'a> MoveConstraints<'a> {
    pub fn new(
        env: &'a Environment,
        grid: Grid,
        prev: Vec<Point>,
        max_disp: f64,
        min_sep: f64,
    ) -> Result<Self> {
        if !(max_disp >= 0.0) || !(min_sep >= 0.0) {
            return Err(Error::Input(format!(
                "need max_disp ≥ 0 and min_sep ≥ 0, got {max_disp}, {min_sep}"
            )));
        }
        Ok(Self {
            env,
            grid,
            prev,
            max_disp,
            min_sep,
        })
    }

    pub fn n_abs(&self) -> usize {
        self.prev.len()
    }

    /// Cells the ABSs currently occupy.
    pub fn base(&self) -> Placement {
        Placement::new(self.prev.iter().map(|&p| self.grid.cell_of(p)).collect())
    }

    /// Whether ABS `i` may hover over `cell`: valid airspace and within reach.
    /// An ABS may always stay in the cell it already occupies.
    pub fn cell_ok(&self, i: usize, cell: usize) -> bool {
        let c = self.grid.center(cell);
        if !self.env.abs_position_valid(c) {
            return false;
        }
        cell == self.grid.cell_of(self.prev[i])
            || c.dist(self.prev[i]) <= self.max_disp * (1.0 + 1e-12) + 1e-9
    }

    /// Whether two ABSs may occupy the given cells simultaneously.
    pub fn pair_ok(&self, a: usize, b: usize) -> bool {
        a != b && self.grid.center(a).dist(self.grid.center(b)) >= self.min_sep
    }

    pub fn placement_ok(&self, p: &Placement) -> bool {
        p.cells.len() == self.n_abs()
            && p.cells
                .iter()
                .enumerate()
                .all(|(i, &c)| c < self.grid.n_cells() && self.cell_ok(i, c))
            && (0..p.cells.len())
                .all(|i| (i + 1..p.cells.len()).all(|j| self.pair_ok(p.cells[i], p.cells[j])))
    }

    fn compatible(&self, cells: &[usize], i: usize, cell: usize) -> bool {
        cells
            .iter()
            .enumerate()
            .all(|(j, &o)| j == i || self.pair_ok(cell, o))
    }
}

/// Planner effort and output size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBudget {
    pub n_iters: usize,
    pub n_per_iter: usize,
    /// Chebyshev mutation radius in cells.
    pub rim: usize,
    pub top_k: usize,
}

impl SearchBudget {
    pub fn n_mutations(&self) -> usize {
        self.n_iters * self.n_per_iter
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::config("budget.top_k", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            n_iters: 64,
            n_per_iter: 128,
            rim: 3,
            top_k: 10,
        }
    }
}

/// A scored placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub placement: Placement,
    pub predicted_cr: f64,
    pub niche: Option<FeatureNiche>,
}

/// Memoised, batch-parallel fitness evaluation against one GU pattern.
pub struct Scorer<'p> {
    predictor: &'p dyn CoveragePredictor,
    gu: Pattern,
    grid: Grid,
    eta: f64,
    memo: HashMap<Vec<usize>, f64>,
    evaluations: usize,
}

impl<'p> Scorer<'p> {
    pub fn new(
        predictor: &'p dyn CoveragePredictor,
        gu: Pattern,
        grid: Grid,
        eta: f64,
    ) -> Result<Self> {
        if predictor.resolution() != grid.k || gu.k != grid.k {
            return Err(Error::Shape(format!(
                "predictor resolution {}, GU pattern {}, grid {}",
                predictor.resolution(),
                gu.k,
                grid.k
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Input(format!(
                "threshold must lie in (0, 1), got {eta}"
            )));
        }
        Ok(Self {
            predictor,
            gu,
            grid,
            eta,
            memo: HashMap::new(),
            evaluations: 0,
        })
    }

    /// Number of distinct placements sent to the predictor so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn score_batch(&mut self, placements: &[Placement]) -> Result<Vec<f64>> {
        let mut fresh: Vec<Vec<usize>> = Vec::new();
        let mut queued = HashSet::new();
        for p in placements {
            let key = p.key();
            if !self.memo.contains_key(&key) && queued.insert(key.clone()) {
                fresh.push(key);
            }
        }
        let grid = self.grid;
        let (predictor, gu, eta) = (self.predictor, &self.gu, self.eta);
        let scored: Vec<Result<f64>> = fresh
            .par_iter()
            .map(|key| predictor.predicted_cr(&Placement::new(key.clone()).pattern(&grid), gu, eta))
            .collect();
        self.evaluations += fresh.len();
        for (key, s) in fresh.into_iter().zip(scored) {
            self.memo.insert(key, s?);
        }
        Ok(placements.iter().map(|p| self.memo[&p.key()]).collect())
    }
}

/// Moves each ABS to a random cell within Chebyshev radius `rim` of its
/// current cell. Draws that break a constraint are retried up to
/// [`MUTATION_TRIES`] times, after which the ABS keeps its cell.
pub fn mutate<R: Rng + ?Sized>(
    p: &Placement,
    rim: usize,
    c: &MoveConstraints,
    rng: &mut R,
) -> Placement {
    let mut cells = p.cells.clone();
    if rim == 0 {
        return Placement::new(cells);
    }
    let k = c.grid.k as i64;
    let r = rim as i64;
    for i in 0..cells.len() {
        let (r0, c0) = ((cells[i] / c.grid.k) as i64, (cells[i] % c.grid.k) as i64);
        for _ in 0..MUTATION_TRIES {
            let row = r0 + rng.random_range(-r..=r);
            let col = c0 + rng.random_range(-r..=r);
            if row < 0 || col < 0 || row >= k || col >= k {
                continue;
            }
            let cell = (row * k + col) as usize;
            if c.cell_ok(i, cell) && c.compatible(&cells, i, cell) {
                cells[i] = cell;
                break;
            }
        }
    }
    Placement::new(cells)
}

/// Scores `base` and `n_mutations` independent mutations of it, drops
/// duplicate placements and ranks by predicted coverage (stable on discovery
/// order).
pub fn nm_search<R: Rng + ?Sized>(
    base: &Placement,
    n_mutations: usize,
    rim: usize,
    constraints: &MoveConstraints,
    scorer: &mut Scorer,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(n_mutations + 1);
    for p in std::iter::once(base.clone())
        .chain((0..n_mutations).map(|_| mutate(base, rim, constraints, rng)))
    {
        if seen.insert(p.key()) {
            pool.push(p);
        }
    }
    let scores = scorer.score_batch(&pool)?;
    let mut out: Vec<Candidate> = pool
        .into_iter()
        .zip(scores)
        .map(|(placement, predicted_cr)| Candidate {
            placement,
            predicted_cr,
            niche: None,
        })
        .collect();
    out.sort_by(|a, b| b.predicted_cr.total_cmp(&a.predicted_cr));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, EnvironmentParams};
    use crate::gridmap::Role;
    use crate::predictor::Blind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open() -> Environment {
        Environment::new(1000.0, 31.25, 60.0, 1.0, vec![]).unwrap()
    }

    #[test]
    fn zero_rim_is_identity() {
        let env = open();
        let grid = Grid::new(64, 1000.0).unwrap();
        let p = Placement::new(vec![100, 2000]);
        let c = MoveConstraints::new(&env, grid, p.positions(&grid), 200.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mutate(&p, 0, &c, &mut rng), p);
    }

    #[test]
    fn rim_one_stays_in_neighbourhood() {
        let env = open();
        let grid = Grid::new(64, 1000.0).unwrap();
        let p = Placement::new(vec![grid.cell_of(Point::new(500.0, 500.0))]);
        let c = MoveConstraints::new(&env, grid, p.positions(&grid), 200.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut moved = false;
        for _ in 0..200 {
            let q = mutate(&p, 1, &c, &mut rng);
            assert!(grid.chebyshev(q.cells[0], p.cells[0]) <= 1);
            moved |= q != p;
        }
        assert!(moved);
    }

    #[test]
    fn crowded_mutations_stay_distinct() {
        let env = open();
        let grid = Grid::new(4, 1000.0).unwrap();
        // Two ABSs on a 2-cell reachable strip.
        let p = Placement::new(vec![0, 1]);
        let c = MoveConstraints::new(&env, grid, p.positions(&grid), 250.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let q = mutate(&p, 3, &c, &mut rng);
            assert_ne!(q.cells[0], q.cells[1]);
            assert!(c.placement_ok(&q));
        }
    }

    #[test]
    fn mutations_respect_constraints_in_city() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = generate_environment(&EnvironmentParams::default(), &mut rng).unwrap();
        let grid = Grid::new(64, 1000.0).unwrap();
        let free: Vec<usize> = (0..grid.n_cells())
            .filter(|&c| env.abs_position_valid(grid.center(c)))
            .collect();
        for _ in 0..50 {
            let cells: Vec<usize> = rand::seq::index::sample(&mut rng, free.len(), 5)
                .iter()
                .map(|i| free[i])
                .collect();
            let p = Placement::new(cells);
            let c = MoveConstraints::new(&env, grid, p.positions(&grid), 140.625, 10.0).unwrap();
            assert!(c.placement_ok(&p));
            for _ in 0..200 {
                assert!(c.placement_ok(&mutate(&p, 3, &c, &mut rng)));
            }
        }
    }

    #[test]
    fn nm_single_draw_without_rim_is_base() {
        let env = open();
        let grid = Grid::new(8, 1000.0).unwrap();
        let p = Placement::new(vec![9, 30]);
        let c = MoveConstraints::new(&env, grid, p.positions(&grid), 300.0, 10.0).unwrap();
        let blind = Blind { k: 8 };
        let mut scorer = Scorer::new(&blind, Pattern::zeros(8, Role::Gu), grid, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = nm_search(&p, 1, 0, &c, &mut scorer, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].placement, p);
        let many = nm_search(&p, 300, 1, &c, &mut scorer, &mut rng).unwrap();
        let keys: HashSet<_> = many.iter().map(|c| c.placement.key()).collect();
        assert_eq!(keys.len(), many.len());
        assert_eq!(many[0].placement, p);
    }
}
