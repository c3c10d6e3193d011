//! K×K grid maps over the square area.
//!
//! Cell `(i, j)` (1-based row `i` along y, column `j` along x) covers
//! `[(j−1)·D/K, j·D/K) × [(i−1)·D/K, i·D/K)`, with the last row and column
//! closed on their upper edge. Internally cells are 0-based row-major indices
//! `(i−1)·K + (j−1)`; [`PatternSequence`] carries the 1-based flattened form
//! `(i−1)·K + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Square lattice of `k × k` cells over `[0, area_side]²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub k: usize,
    pub area_side: f64,
}

impl Grid {
    pub fn new(k: usize, area_side: f64) -> Result<Self> {
        if k == 0 || !(area_side > 0.0) {
            return Err(Error::Input(format!("invalid grid k={k} side={area_side}")));
        }
        Ok(Self { k, area_side })
    }

    #[inline]
    pub fn cell_side(&self) -> f64 {
        self.area_side / self.k as f64
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.k * self.k
    }

    fn axis_bin(&self, v: f64) -> usize {
        let b = (v / self.cell_side()).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(self.k - 1)
        }
    }

    /// 0-based `(row, col)` of the cell containing `p`.
    pub fn row_col(&self, p: Point) -> (usize, usize) {
        (self.axis_bin(p.y), self.axis_bin(p.x))
    }

    /// 0-based row-major cell index of `p`.
    pub fn cell_of(&self, p: Point) -> usize {
        let (r, c) = self.row_col(p);
        r * self.k + c
    }

    pub fn center(&self, cell: usize) -> Point {
        let w = self.cell_side();
        let (r, c) = (cell / self.k, cell % self.k);
        Point::new((c as f64 + 0.5) * w, (r as f64 + 0.5) * w)
    }

    /// Chebyshev distance between two cells, in cells.
    pub fn chebyshev(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = (a / self.k, a % self.k);
        let (rb, cb) = (b / self.k, b % self.k);
        ra.abs_diff(rb).max(ca.abs_diff(cb))
    }

    /// Cells within Chebyshev radius `r` of `cell`, in row-major order.
    pub fn neighbourhood(&self, cell: usize, r: usize) -> Vec<usize> {
        let (r0, c0) = (cell / self.k, cell % self.k);
        let rows = r0.saturating_sub(r)..=(r0 + r).min(self.k - 1);
        let mut out = Vec::new();
        for row in rows {
            for col in c0.saturating_sub(r)..=(c0 + r).min(self.k - 1) {
                out.push(row * self.k + col);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Abs,
    Gu,
    Cgu,
}

/// Per-cell entity counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub k: usize,
    pub role: Role,
    /// Row-major `k × k` counts.
    pub counts: Vec<u32>,
}

impl Pattern {
    pub fn zeros(k: usize, role: Role) -> Self {
        Self {
            k,
            role,
            counts: vec![0; k * k],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.k + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.counts.chunks(self.k).map(<[u32]>::to_vec).collect()
    }

    pub fn from_rows(rows: &[Vec<u32>], role: Role) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("pattern rows are not {k}×{k}")));
        }
        Ok(Self {
            k,
            role,
            counts: rows.concat(),
        })
    }

    /// Occupied cells in ascending order, each repeated by its count.
    pub fn occupied_cells(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(i, c as usize));
        }
        out
    }
}

/// Counts positions per grid cell.
pub fn quantize(positions: &[Point], grid: &Grid, role: Role) -> Pattern {
    let mut p = Pattern::zeros(grid.k, role);
    for &pos in positions {
        p.counts[grid.cell_of(pos)] += 1;
    }
    p
}

/// Per-cell positivity indicator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub k: usize,
    pub bits: Vec<u8>,
}

impl BinaryMask {
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.k).map(<[u8]>::to_vec).collect()
    }

    pub fn as_counts(&self, role: Role) -> Pattern {
        Pattern {
            k: self.k,
            role,
            counts: self.bits.iter().map(|&b| b as u32).collect(),
        }
    }
}

pub fn binary_mask(p: &Pattern) -> BinaryMask {
    BinaryMask {
        k: p.k,
        bits: p.counts.iter().map(|&c| u8::from(c > 0)).collect(),
    }
}

/// Ascending 1-based flattened ABS cell indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatternSequence(pub Vec<usize>);

impl PatternSequence {
    /// Builds the canonical sequence from 0-based cells.
    pub fn from_cells(cells: &[usize]) -> Result<Self> {
        let mut idx: Vec<usize> = cells.iter().map(|&c| c + 1).collect();
        idx.sort_unstable();
        if let Some(w) = idx.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Overlap(format!("cell index {} used twice", w[0])));
        }
        Ok(Self(idx))
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i - 1)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn to_sequence(positions: &[Point], grid: &Grid) -> Result<PatternSequence> {
    let cells: Vec<usize> = positions.iter().map(|&p| grid.cell_of(p)).collect();
    PatternSequence::from_cells(&cells)
}

pub fn pattern_to_sequence(p: &Pattern) -> Result<PatternSequence> {
    if let Some(i) = p.counts.iter().position(|&c| c > 1) {
        return Err(Error::Overlap(format!(
            "{} ABSs share cell index {}",
            p.counts[i],
            i + 1
        )));
    }
    PatternSequence::from_cells(&p.occupied_cells())
}

/// Cell centres of a sequence, in sequence order.
pub fn to_positions(seq: &PatternSequence, grid: &Grid) -> Result<Vec<Point>> {
    if let Some(&bad) = seq.0.iter().find(|&&i| i == 0 || i > grid.n_cells()) {
        return Err(Error::Input(format!(
            "cell index {bad} outside 1..={}",
            grid.n_cells()
        )));
    }
    Ok(seq.cells().map(|c| grid.center(c)).collect())
}

/// ABS-ordered cell assignment: `cells[n]` is the 0-based cell of ABS `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub cells: Vec<usize>,
}

impl Placement {
    pub fn new(cells: Vec<usize>) -> Self {
        Self { cells }
    }

    pub fn positions(&self, grid: &Grid) -> Vec<Point> {
        self.cells.iter().map(|&c| grid.center(c)).collect()
    }

    pub fn sequence(&self) -> Result<PatternSequence> {
        PatternSequence::from_cells(&self.cells)
    }

    /// Sorted cells, the order-free identity of the placement.
    pub fn key(&self) -> Vec<usize> {
        let mut k = self.cells.clone();
        k.sort_unstable();
        k
    }

    pub fn pattern(&self, grid: &Grid) -> Pattern {
        let mut p = Pattern::zeros(grid.k, Role::Abs);
        for &c in &self.cells {
            p.counts[c] += 1;
        }
        p
    }
}

/// Quantized (mean, std) of pairwise ABS distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureNiche {
    pub mean_bin: u32,
    pub std_bin: u32,
}

/// Mean and population standard deviation of all pairwise distances.
pub fn pairwise_distance_stats(points: &[Point]) -> Result<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateFeature(format!(
            "need at least 2 ABSs, got {n}"
        )));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(points[i].dist(points[j]));
        }
    }
    let cnt = d.len() as f64;
    let mean = d.iter().sum::<f64>() / cnt;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cnt;
    Ok((mean, var.max(0.0).sqrt()))
}

pub fn feature_of_points(points: &[Point], bin_width: f64) -> Result<FeatureNiche> {
    if !(bin_width > 0.0) {
        return Err(Error::Input(format!(
            "niche bin width must be positive, got {bin_width}"
        )));
    }
    let (mean, std) = pairwise_distance_stats(points)?;
    Ok(FeatureNiche {
        mean_bin: (mean / bin_width).floor() as u32,
        std_bin: (std / bin_width).floor() as u32,
    })
}

pub fn feature_of(seq: &PatternSequence, grid: &Grid, bin_width: f64) -> Result<FeatureNiche> {
    feature_of_points(&to_positions(seq, grid)?, bin_width)
}
