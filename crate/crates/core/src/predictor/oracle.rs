use std::sync::atomic::{AtomicU64, Ordering};

use crate::channel::{
    associate, coverage_from_links, link_outage, max_cluster_size, ChannelParams, CoverageReport,
};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gridmap::{pattern_to_sequence, Grid, Pattern, Placement};
use crate::Point;

use super::{check_resolution, CoveragePredictor, ProbabilityMap};

const UNSET: u64 = u64::MAX;

/// Exact coverage evaluation against known GU coordinates.
///
/// ABSs are placed at the centres of their cells. Per-link outages depend
/// only on (ABS cell, GU), so they are computed lazily once and shared
/// between all candidates scored against the same GU snapshot.
pub struct ExactOracle<'a> {
    env: &'a Environment,
    params: ChannelParams,
    grid: Grid,
    n_abs: usize,
    gus: Vec<Point>,
    gu_cells: Vec<usize>,
    outage: Vec<AtomicU64>,
}

impl<'a> ExactOracle<'a> {
    pub fn new(
        env: &'a Environment,
        params: ChannelParams,
        grid: Grid,
        n_abs: usize,
        gus: Vec<Point>,
    ) -> Result<Self> {
        if n_abs == 0 {
            return Err(Error::Input("at least one ABS is required".into()));
        }
        let gu_cells = gus.iter().map(|&p| grid.cell_of(p)).collect();
        let outage = (0..grid.n_cells() * gus.len())
            .map(|_| AtomicU64::new(UNSET))
            .collect();
        Ok(Self {
            env,
            params,
            grid,
            n_abs,
            gus,
            gu_cells,
            outage,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gus(&self) -> &[Point] {
        &self.gus
    }

    fn link(&self, cell: usize, g: usize) -> f64 {
        let slot = &self.outage[cell * self.gus.len() + g];
        let bits = slot.load(Ordering::Relaxed);
        if bits != UNSET {
            return f64::from_bits(bits);
        }
        let p = link_outage(
            self.env,
            &self.params,
            self.n_abs,
            self.grid.center(cell),
            self.gus[g],
        );
        slot.store(p.to_bits(), Ordering::Relaxed);
        p
    }

    /// Coverage with ABS `n` hovering at the centre of `cells[n]`.
    pub fn coverage(&self, cells: &[usize]) -> Result<CoverageReport> {
        if cells.len() != self.n_abs {
            return Err(Error::Input(format!(
                "oracle built for {} ABSs, got {}",
                self.n_abs,
                cells.len()
            )));
        }
        if let Some(&c) = cells.iter().find(|&&c| c >= self.grid.n_cells()) {
            return Err(Error::Input(format!("cell {c} outside the grid")));
        }
        let pos: Vec<Point> = cells.iter().map(|&c| self.grid.center(c)).collect();
        let max = max_cluster_size(self.gus.len(), self.n_abs, self.params.load_slack);
        let assoc = associate(&pos, &self.gus, max)?;
        Ok(coverage_from_links(
            assoc,
            &self.params,
            self.n_abs,
            |g, a| self.link(cells[a], g),
        ))
    }

    /// Actual coverage rate λ of a placement.
    pub fn actual_rate(&self, placement: &Placement) -> Result<f64> {
        Ok(self.coverage(&placement.cells)?.rate)
    }

    /// Cells holding at least one uncovered GU.
    fn uncovered_cells(&self, report: &CoverageReport) -> Vec<bool> {
        let mut bad = vec![false; self.grid.n_cells()];
        for (g, &ok) in report.indicators.iter().enumerate() {
            if !ok {
                bad[self.gu_cells[g]] = true;
            }
        }
        bad
    }

    fn cells_of(&self, abs: &Pattern, gu: &Pattern) -> Result<Vec<usize>> {
        check_resolution(self.grid.k, abs, gu)?;
        Ok(pattern_to_sequence(abs)?.cells().collect())
    }
}

impl CoveragePredictor for ExactOracle<'_> {
    fn resolution(&self) -> usize {
        self.grid.k
    }

    fn predict(&self, abs: &Pattern, gu: &Pattern) -> Result<ProbabilityMap<f64>> {
        let report = self.coverage(&self.cells_of(abs, gu)?)?;
        let bad = self.uncovered_cells(&report);
        let mut map = ProbabilityMap::filled(self.grid.k, 0.0);
        for &c in &self.gu_cells {
            if !bad[c] {
                map.probs[c] = 1.0;
            }
        }
        Ok(map)
    }

    fn predicted_cr(&self, abs: &Pattern, gu: &Pattern, eta: f64) -> Result<f64> {
        let report = self.coverage(&self.cells_of(abs, gu)?)?;
        let bad = self.uncovered_cells(&report);
        let mut seen = vec![false; self.grid.n_cells()];
        let mut covered = 0usize;
        // Oracle probabilities are 0 or 1, so any η in (0, 1) selects the same cells.
        debug_assert!(eta > 0.0 && eta < 1.0);
        for &c in &self.gu_cells {
            if !bad[c] && !seen[c] {
                seen[c] = true;
                covered += gu.counts[c] as usize;
            }
        }
        let m = gu.total();
        Ok(if m == 0 {
            0.0
        } else {
            covered as f64 / m as f64
        })
    }
}
