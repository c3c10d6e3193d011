//! JSON experiment configuration, matched-seed scheme comparison and niche
//! heatmap dumps.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelParams;
use crate::datagen::Strategy;
use crate::env::{generate_environment, Environment, EnvironmentParams};
use crate::error::{Error, Result};
use crate::gridmap::{feature_of_points, quantize, FeatureNiche, Placement, Role};
use crate::mission::{
    gu_trajectory, initial_placement, run_trial, MissionParams, Planner, PredictorChoice,
    TimeConfig,
};
use crate::predictor::{CoveragePredictor, Emulator, ExactOracle, DEFAULT_ETA};
use crate::rng::{derive, stream};
use crate::search::{map_elites, mutate, MoveConstraints, Scorer, SearchBudget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    /// Load buildings from this file instead of generating them.
    pub file: Option<PathBuf>,
    pub seed: u64,
    pub area_side_m: f64,
    pub footprint_side_m: f64,
    pub n_buildings: usize,
    pub height_range_m: [f64; 2],
    pub abs_altitude_m: f64,
    pub gu_height_m: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        let p = EnvironmentParams::default();
        Self {
            file: None,
            seed: 0,
            area_side_m: p.area_side_m,
            footprint_side_m: p.footprint_side_m,
            n_buildings: p.n_buildings,
            height_range_m: p.height_range_m,
            abs_altitude_m: p.abs_altitude_m,
            gu_height_m: p.gu_height_m,
        }
    }
}

impl EnvironmentConfig {
    pub fn params(&self) -> EnvironmentParams {
        EnvironmentParams {
            area_side_m: self.area_side_m,
            footprint_side_m: self.footprint_side_m,
            n_buildings: self.n_buildings,
            height_range_m: self.height_range_m,
            abs_altitude_m: self.abs_altitude_m,
            gu_height_m: self.gu_height_m,
        }
    }
}

/// Channel settings with SNRs in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub transmit_snr_db: f64,
    pub snr_threshold_db: f64,
    pub rate_threshold_bps: f64,
    pub k_min_db: f64,
    pub k_max_db: f64,
    pub load_slack: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 2e9,
            bandwidth_hz: 20e6,
            transmit_snr_db: 115.0,
            snr_threshold_db: 15.0,
            rate_threshold_bps: 0.83e6,
            k_min_db: 0.0,
            k_max_db: 30.0,
            load_slack: 0.2,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> Result<ChannelParams> {
        ChannelParams::from_db(
            self.carrier_freq_hz,
            self.bandwidth_hz,
            self.transmit_snr_db,
            self.snr_threshold_db,
            self.rate_threshold_bps,
            self.k_min_db,
            self.k_max_db,
            self.load_slack,
        )
        .map_err(|e| Error::config("channel", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub strategy: Strategy,
    pub n_trials: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Mixed,
            n_trials: 1,
        }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub channel: ChannelConfig,
    pub time: TimeConfig,
    pub budget: SearchBudget,
    pub grid_k: usize,
    pub n_abs: usize,
    pub n_gus: usize,
    pub abs_speed_mps: f64,
    pub gu_speed_mps: f64,
    pub min_sep_m: f64,
    pub eta: f64,
    pub niche_bin_width_m: Option<f64>,
    pub planner: Planner,
    /// `"oracle"` or `"emulator:<weight file>"`.
    pub predictor: String,
    pub seed: u64,
    pub n_trials: usize,
    pub schemes: Vec<Planner>,
    pub collect: CollectConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentConfig::default(),
            channel: ChannelConfig::default(),
            time: TimeConfig::default(),
            budget: SearchBudget::default(),
            grid_k: 64,
            n_abs: 5,
            n_gus: 100,
            abs_speed_mps: 30.0,
            gu_speed_mps: 2.0,
            min_sep_m: 10.0,
            eta: DEFAULT_ETA,
            niche_bin_width_m: None,
            planner: Planner::SdlMe,
            predictor: "oracle".into(),
            seed: 0,
            n_trials: 5,
            schemes: vec![Planner::Nm, Planner::SdlNm, Planner::SdlMe],
            collect: CollectConfig::default(),
        }
    }
}

/// Predictor named in a config.
pub enum PredictorSpec {
    Oracle,
    Emulator(Box<Emulator>),
}

impl PredictorSpec {
    pub fn choice(&self) -> PredictorChoice<'_> {
        match self {
            PredictorSpec::Oracle => PredictorChoice::Oracle,
            PredictorSpec::Emulator(e) => PredictorChoice::Learned(e.as_ref()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn mission_params(&self) -> Result<MissionParams> {
        Ok(MissionParams {
            time: self.time,
            grid_k: self.grid_k,
            n_abs: self.n_abs,
            n_gus: self.n_gus,
            abs_speed: self.abs_speed_mps,
            gu_speed: self.gu_speed_mps,
            min_sep: self.min_sep_m,
            channel: self.channel.params()?,
            budget: self.budget,
            eta: self.eta,
            niche_bin_width: self.niche_bin_width_m,
        })
    }

    pub fn environment(&self) -> Result<Environment> {
        match &self.environment.file {
            Some(path) => Environment::from_json(&std::fs::read_to_string(path)?),
            None => generate_environment(
                &self.environment.params(),
                &mut stream(self.environment.seed, &[0]),
            )
            .map_err(|e| Error::config("environment", e.to_string())),
        }
    }

    pub fn predictor(&self) -> Result<PredictorSpec> {
        if self.predictor == "oracle" {
            return Ok(PredictorSpec::Oracle);
        }
        match self.predictor.strip_prefix("emulator:") {
            Some(path) => {
                let emu = Emulator::load(Path::new(path))?;
                if emu.resolution() != self.grid_k {
                    return Err(Error::config(
                        "predictor",
                        format!(
                            "model resolution {} differs from grid_k {}",
                            emu.resolution(),
                            self.grid_k
                        ),
                    ));
                }
                Ok(PredictorSpec::Emulator(Box::new(emu)))
            }
            None => Err(Error::config(
                "predictor",
                "expected \"oracle\" or \"emulator:<path>\"",
            )),
        }
    }

    /// Cross-field checks that need the environment.
    pub fn validate(&self, env: &Environment) -> Result<MissionParams> {
        let p = self.mission_params()?;
        p.validate(env)?;
        if (env.area_side() / self.grid_k as f64).is_nan() {
            return Err(Error::config("grid_k", "invalid"));
        }
        Ok(p)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed of trial `t` in a matched-seed experiment.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive(seed, &[100, t as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Planner,
    pub mean_acr: f64,
    pub std_acr: f64,
    pub n: usize,
    pub seed_digest: String,
    pub acr: Vec<f64>,
    pub step_mean: Vec<f64>,
    pub step_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<SchemeSummary>,
}

impl Comparison {
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scheme,mean_acr,std_acr,n,seed_digest")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.scheme.name(),
                r.mean_acr,
                r.std_acr,
                r.n,
                r.seed_digest
            )?;
        }
        Ok(())
    }

    /// `step,<scheme>_mean,<scheme>_std,...`
    pub fn write_series_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("step");
        for r in &self.rows {
            header.push_str(&format!(",{0}_mean,{0}_std", r.scheme.name()));
        }
        writeln!(w, "{header}")?;
        let steps = self.rows.first().map_or(0, |r| r.step_mean.len());
        for i in 0..steps {
            let mut line = i.to_string();
            for r in &self.rows {
                line.push_str(&format!(",{},{}", r.step_mean[i], r.step_std[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn seed_digest(seeds: &[u64]) -> String {
    let mut h = Sha256::new();
    for s in seeds {
        h.update(s.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Runs every scheme on the same environment and the same per-trial seeds.
pub fn compare(
    env: &Environment,
    params: &MissionParams,
    schemes: &[Planner],
    n_trials: usize,
    seed: u64,
    predictor: PredictorChoice,
) -> Result<Comparison> {
    params.validate(env)?;
    let seeds: Vec<u64> = (0..n_trials).map(|t| trial_seed(seed, t)).collect();
    let jobs: Vec<(usize, u64)> = (0..schemes.len())
        .flat_map(|s| seeds.iter().map(move |&x| (s, x)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(s, x)| run_trial(env, params, schemes[s], predictor, x))
        .collect::<Result<Vec<_>>>()?;
    let digest = seed_digest(&seeds);
    let mut rows = Vec::with_capacity(schemes.len());
    for (s, &scheme) in schemes.iter().enumerate() {
        let trials = &results[s * n_trials..(s + 1) * n_trials];
        let acr: Vec<f64> = trials.iter().map(|t| t.acr).collect();
        let (mean_acr, std_acr) = mean_std(&acr);
        let steps = params.time.n_steps();
        let (step_mean, step_std) = (0..steps)
            .map(|i| mean_std(&trials.iter().map(|t| t.step_cr[i]).collect::<Vec<_>>()))
            .unzip();
        rows.push(SchemeSummary {
            scheme,
            mean_acr,
            std_acr,
            n: n_trials,
            seed_digest: digest.clone(),
            acr,
            step_mean,
            step_std,
        });
    }
    Ok(Comparison { rows })
}

/// One planner candidate with its niche, predicted and true coverage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub sequence: Vec<usize>,
    pub mean_bin: u32,
    pub std_bin: u32,
    pub predicted_cr: f64,
    pub actual_cr: f64,
}

pub fn distinct_niches(rows: &[HeatmapRow]) -> usize {
    rows.iter()
        .map(|r| (r.mean_bin, r.std_bin))
        .collect::<HashSet<_>>()
        .len()
}

/// All candidates generated by one planning call at the start of a trial.
pub fn niche_heatmap(
    env: &Environment,
    params: &MissionParams,
    planner: Planner,
    predictor: PredictorChoice,
    seed: u64,
) -> Result<Vec<HeatmapRow>> {
    params.validate(env)?;
    let grid = params.grid(env);
    let gus = gu_trajectory(env, params, seed).swap_remove(0);
    let abs = initial_placement(env, params, &gus, seed);
    let constraints = MoveConstraints::new(env, grid, abs, params.max_disp(env), params.min_sep)?;
    let base = constraints.base();
    let oracle = ExactOracle::new(env, params.channel, grid, params.n_abs, gus.clone())?;
    let scoring: &dyn CoveragePredictor = match predictor {
        PredictorChoice::Oracle => &oracle,
        PredictorChoice::Learned(p) => p,
    };
    let mut scorer = Scorer::new(scoring, quantize(&gus, &grid, Role::Gu), grid, params.eta)?;
    let mut rng = stream(derive(seed, &[4, 0]), &[]);
    let b = &params.budget;
    let placements: Vec<(Placement, f64)> = match planner {
        Planner::Nm | Planner::SdlNm => {
            let pool: Vec<Placement> = (0..b.n_mutations())
                .map(|_| mutate(&base, b.rim, &constraints, &mut rng))
                .collect();
            let scores = scorer.score_batch(&pool)?;
            pool.into_iter().zip(scores).collect()
        }
        Planner::SdlMe => map_elites(
            &base,
            b,
            &constraints,
            &mut scorer,
            params.bin_width(env),
            &mut rng,
        )?
        .evaluated
        .into_iter()
        .map(|c| (c.placement, c.predicted_cr))
        .collect(),
        other => {
            return Err(Error::config(
                "planner",
                format!(
                    "niche heatmap needs nm, sdl-nm or sdl-me, got {}",
                    other.name()
                ),
            ))
        }
    };
    placements
        .into_iter()
        .map(|(p, predicted_cr)| {
            let FeatureNiche { mean_bin, std_bin } =
                feature_of_points(&p.positions(&grid), params.bin_width(env))?;
            Ok(HeatmapRow {
                sequence: p.sequence()?.0,
                mean_bin,
                std_bin,
                predicted_cr,
                actual_cr: oracle.actual_rate(&p)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_carry_paths() {
        let err = ExperimentConfig::from_json(r#"{"time": {"step_s": "fast"}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "time.step_s"),
            e => panic!("unexpected {e}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let ok = ExperimentConfig::from_json(r#"{"n_abs": 3, "planner": "sdl-nm"}"#).unwrap();
        assert_eq!(ok.n_abs, 3);
        assert_eq!(ok.planner, Planner::SdlNm);
        assert_eq!(ok.grid_k, 64);
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
