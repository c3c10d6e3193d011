//! Training-sample collection for the coverage emulator.
//!
//! A dataset is a JSON Lines file with one sample per line,
//! `{"abs": [[..]], "gu": [[..]], "mask": [[..]]}` (row-major `K × K`), next to
//! a manifest `<dataset>.manifest.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::evaluate_coverage;
use crate::env::{Environment, Router};
use crate::error::{Error, Result};
use crate::gridmap::{binary_mask, quantize, Placement, Role};
use crate::mission::{gu_trajectory, initial_placement, MissionParams};
use crate::rng::{derive, stream};
use crate::search::{ckmeans_init, MoveConstraints};
use crate::Point;

/// Draws per ABS when sampling a random reachable cell.
pub const RANDOM_TRIES: usize = 64;
/// Trials collected concurrently before their samples are written.
const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Random feasible destinations.
    CRandom,
    /// Constrained K-means destinations.
    CKMeans,
    /// Even trials `CRandom`, odd trials `CKMeans`.
    Mixed,
}

impl Strategy {
    fn for_trial(self, t: usize) -> Strategy {
        match self {
            Strategy::Mixed if t.is_multiple_of(2) => Strategy::CRandom,
            Strategy::Mixed => Strategy::CKMeans,
            s => s,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "crandom" => Some(Self::CRandom),
            "ckmeans" => Some(Self::CKMeans),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub abs: Vec<Vec<u32>>,
    pub gu: Vec<Vec<u32>>,
    pub mask: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub env_hash: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub count: usize,
}

pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn random_destination<R: Rng + ?Sized>(c: &MoveConstraints, rng: &mut R) -> Placement {
    let grid = c.grid;
    let k = grid.k as i64;
    let r = (c.max_disp / grid.cell_side()).floor().min(grid.k as f64) as i64;
    let mut cells = c.base().cells;
    for i in 0..cells.len() {
        let (r0, c0) = ((cells[i] / grid.k) as i64, (cells[i] % grid.k) as i64);
        for _ in 0..RANDOM_TRIES {
            let (row, col) = (r0 + rng.random_range(-r..=r), c0 + rng.random_range(-r..=r));
            if row < 0 || col < 0 || row >= k || col >= k {
                continue;
            }
            let cell = (row * k + col) as usize;
            if c.cell_ok(i, cell)
                && cells
                    .iter()
                    .enumerate()
                    .all(|(j, &o)| j == i || c.pair_ok(cell, o))
            {
                cells[i] = cell;
                break;
            }
        }
    }
    Placement::new(cells)
}

/// Samples of one trial, one per step.
pub fn collect_trial(
    env: &Environment,
    params: &MissionParams,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<Sample>> {
    params.validate(env)?;
    let grid = params.grid(env);
    let gu_traj = gu_trajectory(env, params, seed);
    let mut rng = stream(seed, &[5]);
    let mut abs = match strategy {
        Strategy::CKMeans | Strategy::Mixed => initial_placement(env, params, &gu_traj[0], seed),
        Strategy::CRandom => {
            let centre = Point::new(env.area_side() / 2.0, env.area_side() / 2.0);
            let c = MoveConstraints::new(
                env,
                grid,
                vec![centre; params.n_abs],
                f64::INFINITY,
                params.min_sep,
            )?;
            random_destination(&c, &mut rng).positions(&grid)
        }
    };
    let router = Router::new(env);
    let t = &params.time;
    let reach = params.abs_speed * t.period_s;
    let mut out = Vec::with_capacity(t.n_steps());
    for e in 0..t.n_periods() {
        let start = e * t.steps_per_period();
        let c = MoveConstraints::new(env, grid, abs.clone(), reach, params.min_sep)?;
        let dest = match strategy {
            Strategy::CRandom => random_destination(&c, &mut rng).positions(&grid),
            _ => ckmeans_init(&gu_traj[start], &c, &mut rng),
        };
        let cand = [Placement::new(
            dest.iter().map(|&p| grid.cell_of(p)).collect(),
        )];
        let last = e + 1 == t.n_periods();
        let gus = &gu_traj[start..start + t.steps_per_period()];
        let run = crate::mission::execute_period(
            env, &router, params, &abs, &cand, gus, start, true, !last,
        )?;
        for (pos, gu) in run.abs_traj.iter().zip(gus) {
            let report = evaluate_coverage(env, pos, gu, &params.channel)?;
            let covered: Vec<Point> = gu
                .iter()
                .zip(&report.indicators)
                .filter(|(_, &c)| c)
                .map(|(&p, _)| p)
                .collect();
            out.push(Sample {
                abs: quantize(pos, &grid, Role::Abs).to_rows(),
                gu: quantize(gu, &grid, Role::Gu).to_rows(),
                mask: binary_mask(&quantize(&covered, &grid, Role::Cgu)).to_rows(),
            });
        }
        abs = run.end_abs;
    }
    Ok(out)
}

/// Collects `n_trials` trials and writes their samples as JSON Lines in trial order.
pub fn collect<W: Write>(
    env: &Environment,
    params: &MissionParams,
    strategy: Strategy,
    n_trials: usize,
    seed: u64,
    sink: &mut W,
) -> Result<usize> {
    let mut count = 0;
    let trials: Vec<usize> = (0..n_trials).collect();
    for chunk in trials.chunks(CHUNK) {
        let batches: Vec<Result<Vec<Sample>>> = chunk
            .par_iter()
            .map(|&t| {
                collect_trial(
                    env,
                    params,
                    strategy.for_trial(t),
                    derive(seed, &[t as u64]),
                )
            })
            .collect();
        for batch in batches {
            for s in batch? {
                serde_json::to_writer(&mut *sink, &s)?;
                sink.write_all(b"\n")?;
                count += 1;
            }
        }
    }
    sink.flush()?;
    Ok(count)
}

/// Collects into `path` and writes the manifest beside it.
pub fn write_dataset(
    path: &Path,
    env: &Environment,
    params: &MissionParams,
    strategy: Strategy,
    n_trials: usize,
    seed: u64,
) -> Result<Manifest> {
    let mut w = BufWriter::new(File::create(path)?);
    let count = collect(env, params, strategy, n_trials, seed, &mut w)?;
    let manifest = Manifest {
        k: params.grid_k,
        n: params.n_abs,
        m: params.n_gus,
        env_hash: env.digest(),
        strategy,
        seed,
        count,
    };
    std::fs::write(
        manifest_path(path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Seeded shuffle split; the validation side gets `⌊n · val_fraction⌋` ids.
pub fn split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Input(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut stream(seed, &[6]));
    let n_val = (n as f64 * val_fraction).floor() as usize;
    let mut val = ids[..n_val].to_vec();
    let mut train = ids[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let (t, v) = split(100, 0.1, 1).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t, v) = split(3, 0.5, 1).unwrap();
        assert_eq!((t.len(), v.len()), (2, 1));
        assert_eq!(split(50, 0.2, 9).unwrap(), split(50, 0.2, 9).unwrap());
        let mut all: Vec<usize> = t.into_iter().chain(v).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(split(10, 1.0, 0).is_err());
    }

    #[test]
    fn strategy_mix_alternates() {
        assert_eq!(Strategy::Mixed.for_trial(0), Strategy::CRandom);
        assert_eq!(Strategy::Mixed.for_trial(1), Strategy::CKMeans);
        assert_eq!(Strategy::CKMeans.for_trial(0), Strategy::CKMeans);
    }
}
