//! Urban environment: building blocks, LoS visibility, ABS airspace and GU mobility.

mod los;
mod route;

pub use route::{path_length, Router};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{Aabb3, Rect};
use crate::Point;

use los::BinIndex;

/// Retries when a GU's random heading leads outside the area or into a building.
pub const GU_HEADING_RETRIES: usize = 8;

/// A square building footprint extruded to its height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildingBlock {
    /// Lower-left corner of the footprint.
    pub origin: Point,
    pub side: f64,
    pub height: f64,
}

impl BuildingBlock {
    pub fn footprint(&self) -> Rect<f64> {
        Rect::new(
            self.origin,
            Point::new(self.origin.x + self.side, self.origin.y + self.side),
        )
    }

    pub fn volume(&self) -> Aabb3<f64> {
        Aabb3 {
            min: [self.origin.x, self.origin.y, 0.0],
            max: [
                self.origin.x + self.side,
                self.origin.y + self.side,
                self.height,
            ],
        }
    }
}

/// Square area with building blocks, a fixed ABS flight altitude and GU antenna height.
#[derive(Clone, Debug)]
pub struct Environment {
    area_side: f64,
    footprint_side: f64,
    abs_altitude: f64,
    gu_height: f64,
    buildings: Vec<BuildingBlock>,
    /// Indices of buildings reaching the flight altitude.
    obstacles: Vec<usize>,
    all_index: BinIndex,
    obstacle_index: BinIndex,
}

impl Environment {
    pub fn new(
        area_side: f64,
        footprint_side: f64,
        abs_altitude: f64,
        gu_height: f64,
        buildings: Vec<BuildingBlock>,
    ) -> Result<Self> {
        if !(area_side > 0.0 && area_side.is_finite()) {
            return Err(Error::Input(format!(
                "area side must be positive, got {area_side}"
            )));
        }
        if !(footprint_side > 0.0 && footprint_side <= area_side) {
            return Err(Error::Input(format!(
                "footprint side {footprint_side} out of range"
            )));
        }
        if !(gu_height > 0.0 && gu_height < abs_altitude) {
            return Err(Error::Input(format!(
                "need 0 < gu_height < abs_altitude, got {gu_height} and {abs_altitude}"
            )));
        }
        for (i, b) in buildings.iter().enumerate() {
            let f = b.footprint();
            if !(b.height > 0.0)
                || f.min.x < 0.0
                || f.min.y < 0.0
                || f.max.x > area_side + 1e-9
                || f.max.y > area_side + 1e-9
            {
                return Err(Error::Input(format!(
                    "building {i} outside area or non-positive height"
                )));
            }
        }
        for i in 0..buildings.len() {
            for j in i + 1..buildings.len() {
                if buildings[i]
                    .footprint()
                    .overlaps_interior(&buildings[j].footprint())
                {
                    return Err(Error::Input(format!("buildings {i} and {j} overlap")));
                }
            }
        }
        let obstacles: Vec<usize> = buildings
            .iter()
            .enumerate()
            .filter(|(_, b)| b.height >= abs_altitude)
            .map(|(i, _)| i)
            .collect();
        let bins = ((area_side / footprint_side).round() as usize).clamp(1, 512);
        let footprints: Vec<Rect<f64>> = buildings.iter().map(|b| b.footprint()).collect();
        let all_index = BinIndex::build(area_side, bins, footprints.iter().copied().enumerate());
        let obstacle_index = BinIndex::build(
            area_side,
            bins,
            obstacles.iter().map(|&i| (i, footprints[i])),
        );
        Ok(Self {
            area_side,
            footprint_side,
            abs_altitude,
            gu_height,
            buildings,
            obstacles,
            all_index,
            obstacle_index,
        })
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn footprint_side(&self) -> f64 {
        self.footprint_side
    }

    pub fn abs_altitude(&self) -> f64 {
        self.abs_altitude
    }

    pub fn gu_height(&self) -> f64 {
        self.gu_height
    }

    pub fn buildings(&self) -> &[BuildingBlock] {
        &self.buildings
    }

    /// Buildings whose height reaches the flight altitude.
    pub fn obstacles(&self) -> impl Iterator<Item = &BuildingBlock> + '_ {
        self.obstacles.iter().map(move |&i| &self.buildings[i])
    }

    #[inline]
    pub fn in_area(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.area_side && p.y <= self.area_side
    }

    /// True when `p` lies inside (or on the boundary of) any building footprint.
    pub fn in_any_footprint(&self, p: Point) -> bool {
        self.all_index
            .candidates_at(p)
            .iter()
            .any(|&i| self.buildings[i as usize].footprint().contains(p))
    }

    /// True when `p` lies in the airspace occupied by a building at flight altitude.
    pub fn in_obstacle(&self, p: Point) -> bool {
        self.obstacle_index
            .candidates_at(p)
            .iter()
            .any(|&i| self.buildings[i as usize].footprint().contains(p))
    }

    /// Whether an ABS may hover at `p`: inside the area and clear of obstacle airspace.
    pub fn abs_position_valid(&self, p: Point) -> bool {
        self.in_area(p) && !self.in_obstacle(p)
    }

    /// Whether a GU may stand at `p`: inside the area and outside every footprint.
    pub fn gu_position_valid(&self, p: Point) -> bool {
        self.in_area(p) && !self.in_any_footprint(p)
    }

    /// Line of sight between an ABS at flight altitude and a GU at antenna height.
    /// Grazing contact with a building volume counts as blocked.
    pub fn is_los(&self, abs_pos: Point, gu_pos: Point) -> bool {
        let a = [abs_pos.x, abs_pos.y, self.abs_altitude];
        let b = [gu_pos.x, gu_pos.y, self.gu_height];
        let mut blocked = false;
        self.all_index.walk_segment(abs_pos, gu_pos, |ids| {
            blocked = ids.iter().any(|&i| {
                crate::geom::segment_hits_box(a, b, &self.buildings[i as usize].volume())
            });
            blocked
        });
        !blocked
    }

    /// Whether the planar segment stays clear of obstacle airspace.
    pub fn flight_segment_clear(&self, a: Point, b: Point) -> bool {
        let mut blocked = false;
        self.obstacle_index.walk_segment(a, b, |ids| {
            blocked = ids.iter().any(|&i| {
                crate::geom::segment_hits_rect(a, b, &self.buildings[i as usize].footprint())
            });
            blocked
        });
        !blocked
    }

    pub fn to_file(&self) -> EnvironmentFile {
        let r2 = |v: f64| (v * 100.0).round() / 100.0;
        EnvironmentFile {
            d: r2(self.area_side),
            dw: r2(self.footprint_side),
            hp: r2(self.abs_altitude),
            hq: r2(self.gu_height),
            buildings: self
                .buildings
                .iter()
                .map(|b| BuildingRecord {
                    x: r2(b.origin.x),
                    y: r2(b.origin.y),
                    h: r2(b.height),
                })
                .collect(),
        }
    }

    pub fn from_file(f: &EnvironmentFile) -> Result<Self> {
        let buildings = f
            .buildings
            .iter()
            .map(|b| BuildingBlock {
                origin: Point::new(b.x, b.y),
                side: f.dw,
                height: b.h,
            })
            .collect();
        Self::new(f.d, f.dw, f.hp, f.hq, buildings)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("environment serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    /// Hex SHA-256 of the serialized environment.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// On-disk environment document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub d: f64,
    pub dw: f64,
    pub hp: f64,
    pub hq: f64,
    pub buildings: Vec<BuildingRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

/// Parameters of the lattice building generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    pub area_side_m: f64,
    pub footprint_side_m: f64,
    pub n_buildings: usize,
    pub height_range_m: [f64; 2],
    pub abs_altitude_m: f64,
    pub gu_height_m: f64,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self {
            area_side_m: 1000.0,
            footprint_side_m: 31.25,
            n_buildings: 200,
            height_range_m: [30.0, 89.0],
            abs_altitude_m: 60.0,
            gu_height_m: 1.0,
        }
    }
}

/// Places `n_buildings` blocks on distinct cells of the `(D/D_w)²` lattice with
/// uniform heights.
pub fn generate_environment<R: Rng + ?Sized>(
    params: &EnvironmentParams,
    rng: &mut R,
) -> Result<Environment> {
    let d = params.area_side_m;
    let dw = params.footprint_side_m;
    let ratio = d / dw;
    let side = ratio.round();
    if !(dw > 0.0) || (ratio - side).abs() > 1e-9 * ratio.max(1.0) || side < 1.0 {
        return Err(Error::Input(format!(
            "area side {d} not divisible by footprint side {dw}"
        )));
    }
    let side = side as usize;
    let capacity = side * side;
    if params.n_buildings > capacity {
        return Err(Error::Capacity(format!(
            "{} buildings exceed lattice capacity {capacity}",
            params.n_buildings
        )));
    }
    let [h_lo, h_hi] = params.height_range_m;
    if !(h_lo > 0.0 && h_hi >= h_lo) {
        return Err(Error::Input(format!(
            "invalid height range [{h_lo}, {h_hi}]"
        )));
    }
    let mut cells = sample(rng, capacity, params.n_buildings).into_vec();
    cells.sort_unstable();
    let buildings = cells
        .into_iter()
        .map(|c| {
            let (row, col) = (c / side, c % side);
            // Heights are kept at centimetre precision so the serialized file is exact.
            let height = if h_hi > h_lo {
                rng.random_range(h_lo..=h_hi)
            } else {
                h_lo
            };
            let height = (height * 100.0).round() / 100.0;
            BuildingBlock {
                origin: Point::new(col as f64 * dw, row as f64 * dw),
                side: dw,
                height,
            }
        })
        .collect();
    Environment::new(d, dw, params.abs_altitude_m, params.gu_height_m, buildings)
}

/// Ground user positions and their common speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuState {
    pub positions: Vec<Point>,
    pub speed: f64,
}

impl GuState {
    /// Draws `m` GUs uniformly over the open ground (outside footprints).
    pub fn random<R: Rng + ?Sized>(env: &Environment, m: usize, speed: f64, rng: &mut R) -> Self {
        let d = env.area_side();
        let positions = (0..m)
            .map(|_| loop {
                let p = Point::new(rng.random_range(0.0..d), rng.random_range(0.0..d));
                if env.gu_position_valid(p) {
                    break p;
                }
            })
            .collect();
        Self { positions, speed }
    }

    pub fn is_valid(&self, env: &Environment) -> bool {
        self.positions.iter().all(|&p| env.gu_position_valid(p))
    }
}

/// Advances every GU by `speed · dt` along an independent uniform heading,
/// resampling headings that leave the area or enter a building.
pub fn step_gus<R: Rng + ?Sized>(
    env: &Environment,
    state: &GuState,
    dt: f64,
    rng: &mut R,
) -> GuState {
    let step = state.speed * dt;
    if step == 0.0 {
        return state.clone();
    }
    let positions = state
        .positions
        .iter()
        .map(|&p| {
            for _ in 0..GU_HEADING_RETRIES {
                let heading = rng.random_range(0.0..std::f64::consts::TAU);
                let q = Point::new(p.x + step * heading.cos(), p.y + step * heading.sin());
                if env.gu_position_valid(q) {
                    return q;
                }
            }
            p
        })
        .collect();
    GuState {
        positions,
        speed: state.speed,
    }
}
