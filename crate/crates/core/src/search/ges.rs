use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gridmap::Placement;
use crate::predictor::ExactOracle;

use super::MoveConstraints;

/// Upper bound on `(2r+1)^(2N)` accepted by [`ges`].
pub const GES_MAX_TUPLES: f64 = 1e8;

/// Search radius in cells reachable within the exploration window:
/// `⌊v_max · Δt_e / (D/K)⌋`.
pub fn ges_radius(v_max: f64, explore_s: f64, cell_side: f64) -> usize {
    ((v_max * explore_s / cell_side) + 1e-9).floor().max(0.0) as usize
}

/// Exhaustive search over all placements whose ABSs lie within Chebyshev
/// radius `r_max` of their current cells, scored by the exact coverage rate.
/// Returns the first placement found with the highest rate.
pub fn ges(
    constraints: &MoveConstraints,
    oracle: &ExactOracle,
    r_max: usize,
) -> Result<(Placement, f64)> {
    let n = constraints.n_abs();
    let base = constraints.base();
    let tuples = ((2 * r_max + 1) as f64).powi(2 * n as i32);
    if tuples > GES_MAX_TUPLES {
        return Err(Error::Budget(format!(
            "exhaustive search over {tuples:.3e} tuples exceeds {GES_MAX_TUPLES:.0e} (N={n}, r_max={r_max})"
        )));
    }
    if r_max == 0 {
        let lambda = oracle.actual_rate(&base)?;
        return Ok((base, lambda));
    }
    let grid = constraints.grid;
    let options: Vec<Vec<usize>> = base
        .cells
        .iter()
        .enumerate()
        .map(|(i, &home)| {
            grid.neighbourhood(home, r_max)
                .into_iter()
                .filter(|&c| constraints.cell_ok(i, c))
                .collect()
        })
        .collect();

    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut best: Option<(Placement, f64)> = None;
    let mut cells = Vec::with_capacity(n);
    let mut err = None;
    enumerate(&options, constraints, &mut cells, &mut |cells| {
        let p = Placement::new(cells.to_vec());
        let lambda = match memo.get(&p.key()) {
            Some(&v) => v,
            None => match oracle.actual_rate(&p) {
                Ok(v) => {
                    memo.insert(p.key(), v);
                    v
                }
                Err(e) => {
                    err.get_or_insert(e);
                    return;
                }
            },
        };
        if best.as_ref().is_none_or(|(_, b)| lambda > *b) {
            best = Some((p, lambda));
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let lambda = oracle.actual_rate(&base)?;
            Ok((base, lambda))
        }
    }
}

fn enumerate(
    options: &[Vec<usize>],
    c: &MoveConstraints,
    cells: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    let i = cells.len();
    if i == options.len() {
        visit(cells);
        return;
    }
    for &cell in &options[i] {
        if cells.iter().all(|&o| c.pair_ok(cell, o)) {
            cells.push(cell);
            enumerate(options, c, cells, visit);
            cells.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_at_defaults() {
        assert_eq!(ges_radius(30.0, 5.0, 1000.0 / 64.0), 9);
        assert_eq!(ges_radius(30.0, 5.0, 1000.0 / 16.0), 2);
        assert_eq!(ges_radius(0.0, 5.0, 15.625), 0);
    }
}
