//! Coverage planning for multiple aerial base stations (ABSs) serving mobile
//! ground users (GUs) in an urban area with building blockage.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`]: buildings, line-of-sight, ABS airspace, GU mobility.
//! * [`channel`]: path loss, Rician outage, capacity-constrained association, coverage.
//! * [`gridmap`]: K×K count patterns, binary masks, pattern sequences, niche features.
//! * [`predictor`]: the coverage-prediction interface (exact oracle and learned emulator).
//! * [`search`]: mutation, constrained K-means, naive mutation, MAP-Elites, exhaustive search.
//! * [`mission`]: the planning / exploration / serving trial loop.
//! * [`datagen`]: emulator training-data collection and the dataset file format.
//! * [`experiment`]: JSON experiment configuration and multi-trial comparisons.
//!
//! Geometry, channel numerics and the emulator forward pass are generic over
//! [`Real`] (`f32`/`f64`); the simulation itself runs in `f64` through the
//! aliases below.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod datagen;
pub mod env;
pub mod error;
pub mod experiment;
pub mod geom;
pub mod gridmap;
pub mod mission;
pub mod predictor;
pub mod rng;
pub mod scalar;
pub mod search;

pub use error::{Error, Result};
pub use scalar::Real;

/// Planar position in metres.
pub type Point = geom::Vec2<f64>;
/// Probability map produced by the simulation-side predictors.
pub type ProbabilityMap = predictor::ProbabilityMap<f64>;
/// Emulator model evaluated in single precision, matching the weight file.
pub type EmulatorModel = predictor::emulator::EmulatorModel<f32>;
