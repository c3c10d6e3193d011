//! Trial / period / step execution of the planning–exploration–serving loop.
//!
//! A trial of `I` steps is split into `E` periods of `J` steps. Each period
//! starts from a plan computed on a GU snapshot taken `Δt_p` earlier. The ABSs
//! then visit the planned candidates in rank order, measuring the true
//! coverage whenever they sit exactly on a candidate, and finally serve from
//! the best measured candidate until the period ends.

mod flight;

pub use flight::move_step;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{evaluate_coverage, ChannelParams};
use crate::env::{step_gus, Environment, GuState, Router};
use crate::error::{Error, Result};
use crate::gridmap::{quantize, Grid, Placement, Role};
use crate::predictor::{Blind, CoveragePredictor, ExactOracle, DEFAULT_ETA};
use crate::rng::stream;
use crate::search::{
    ckmeans_init, ges, ges_radius, map_elites, nm_search, Candidate, MoveConstraints, Scorer,
    SearchBudget,
};
use crate::Point;

use flight::Flight;

/// Time hierarchy of a trial, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub trial_s: f64,
    pub period_s: f64,
    pub explore_s: f64,
    pub serve_s: f64,
    pub plan_s: f64,
    pub step_s: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            trial_s: 200.0,
            period_s: 10.0,
            explore_s: 5.0,
            serve_s: 5.0,
            plan_s: 3.0,
            step_s: 0.5,
        }
    }
}

fn exact_ratio(num: f64, den: f64, path: &str) -> Result<usize> {
    let r = num / den;
    if !(r.is_finite() && r >= 0.0) || (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::config(
            path,
            format!("{num} is not a whole multiple of {den}"),
        ));
    }
    Ok(r.round() as usize)
}

impl TimeConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("time.trial_s", self.trial_s),
            ("time.period_s", self.period_s),
            ("time.explore_s", self.explore_s),
            ("time.serve_s", self.serve_s),
            ("time.step_s", self.step_s),
        ];
        for (p, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(p, "must be a non-negative number"));
            }
        }
        if !(self.step_s > 0.0 && self.period_s > 0.0) {
            return Err(Error::config(
                "time.step_s",
                "step and period must be positive",
            ));
        }
        if (self.explore_s + self.serve_s - self.period_s).abs() > 1e-9 {
            return Err(Error::config(
                "time.explore_s",
                "explore_s + serve_s must equal period_s",
            ));
        }
        if !(self.plan_s >= 0.0 && self.plan_s <= self.period_s) {
            return Err(Error::config("time.plan_s", "must lie in [0, period_s]"));
        }
        exact_ratio(self.trial_s, self.period_s, "time.trial_s")?;
        exact_ratio(self.period_s, self.step_s, "time.period_s")?;
        exact_ratio(self.explore_s, self.step_s, "time.explore_s")?;
        exact_ratio(self.plan_s, self.step_s, "time.plan_s")?;
        Ok(())
    }

    /// `I`, steps per trial.
    pub fn n_steps(&self) -> usize {
        self.n_periods() * self.steps_per_period()
    }

    /// `E`, periods per trial.
    pub fn n_periods(&self) -> usize {
        (self.trial_s / self.period_s).round() as usize
    }

    /// `J`, steps per period.
    pub fn steps_per_period(&self) -> usize {
        (self.period_s / self.step_s).round() as usize
    }

    pub fn explore_steps(&self) -> usize {
        (self.explore_s / self.step_s).round() as usize
    }

    /// Steps between the planning snapshot and the period start.
    pub fn plan_lag_steps(&self) -> usize {
        (self.plan_s / self.step_s).round() as usize
    }
}

/// Placement strategy run at the start of every period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planner {
    /// ABSs never leave their initial placement.
    Static,
    /// The base placement plus `k − 1` random mutations, explored unranked.
    Nm,
    /// `N_m` random mutations of the base ranked by the predictor.
    SdlNm,
    /// MAP-Elites ranked by the predictor.
    SdlMe,
    /// Exhaustive search on the true GU positions at each period start, served for the whole period.
    GesBound,
}

impl Planner {
    pub const ALL: [Planner; 5] = [
        Planner::Static,
        Planner::Nm,
        Planner::SdlNm,
        Planner::SdlMe,
        Planner::GesBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Planner::Static => "static",
            Planner::Nm => "nm",
            Planner::SdlNm => "sdl-nm",
            Planner::SdlMe => "sdl-me",
            Planner::GesBound => "ges-bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Scenario and planner settings shared by every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionParams {
    pub time: TimeConfig,
    pub grid_k: usize,
    pub n_abs: usize,
    pub n_gus: usize,
    /// Maximum ABS speed `V_p` (m/s).
    pub abs_speed: f64,
    /// GU speed `V_q` (m/s).
    pub gu_speed: f64,
    /// Minimum ABS separation `d_min` (m).
    pub min_sep: f64,
    pub channel: ChannelParams,
    pub budget: SearchBudget,
    pub eta: f64,
    /// Niche bin width (m); `None` uses the grid cell side.
    pub niche_bin_width: Option<f64>,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            time: TimeConfig::default(),
            grid_k: 64,
            n_abs: 5,
            n_gus: 100,
            abs_speed: 30.0,
            gu_speed: 2.0,
            min_sep: 10.0,
            channel: ChannelParams::default(),
            budget: SearchBudget::default(),
            eta: DEFAULT_ETA,
            niche_bin_width: None,
        }
    }
}

impl MissionParams {
    pub fn validate(&self, env: &Environment) -> Result<()> {
        self.time.validate()?;
        self.budget.validate()?;
        self.channel.validate()?;
        if self.grid_k == 0 {
            return Err(Error::config("grid_k", "must be positive"));
        }
        if self.n_abs == 0 {
            return Err(Error::config("n_abs", "at least one ABS is required"));
        }
        if crate::channel::max_cluster_size(self.n_gus, self.n_abs, self.channel.load_slack)
            * self.n_abs
            < self.n_gus
        {
            return Err(Error::config(
                "channel.load_slack",
                "ABS capacity cannot serve every GU",
            ));
        }
        if self.n_abs > self.grid_k * self.grid_k {
            return Err(Error::config("n_abs", "more ABSs than grid cells"));
        }
        if !(self.abs_speed >= 0.0) || !(self.gu_speed >= 0.0) || !(self.min_sep >= 0.0) {
            return Err(Error::config(
                "abs_speed",
                "speeds and min_sep must be non-negative",
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::config("eta", "must lie in (0, 1)"));
        }
        if self.niche_bin_width.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::config("niche_bin_width", "must be positive"));
        }
        let _ = env;
        Ok(())
    }

    pub fn grid(&self, env: &Environment) -> Grid {
        Grid::new(self.grid_k, env.area_side()).expect("validated grid")
    }

    /// Exhaustive-search radius in cells; also bounds every planner's reach.
    pub fn search_radius(&self, env: &Environment) -> usize {
        ges_radius(
            self.abs_speed,
            self.time.explore_s,
            self.grid(env).cell_side(),
        )
    }

    pub fn max_disp(&self, env: &Environment) -> f64 {
        self.search_radius(env) as f64 * self.grid(env).cell_side()
    }

    pub fn bin_width(&self, env: &Environment) -> f64 {
        self.niche_bin_width
            .unwrap_or_else(|| self.grid(env).cell_side())
    }

    /// Distance an ABS covers in one step, `d0 = V_p · Δτ`.
    pub fn step_reach(&self) -> f64 {
        self.abs_speed * self.time.step_s
    }
}

/// The predictor used by ranked planners.
#[derive(Clone, Copy)]
pub enum PredictorChoice<'m> {
    /// Exact oracle rebuilt on every planning snapshot.
    Oracle,
    Learned(&'m dyn CoveragePredictor),
}

/// A coverage measurement taken with the ABSs exactly on a candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub candidate: usize,
    /// Step index within the trial.
    pub step: usize,
    pub cr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodLog {
    pub candidates: Vec<Candidate>,
    pub measurements: Vec<Measurement>,
    /// Index of the candidate served after exploration.
    pub elected: Option<usize>,
    pub serving_targets: Vec<Point>,
    pub planning_s: f64,
    pub planner_error: Option<String>,
}

/// Record of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub planner: Planner,
    pub seed: u64,
    pub step_cr: Vec<f64>,
    pub acr: f64,
    pub abs_traj: Vec<Vec<Point>>,
    pub gu_traj: Vec<Vec<Point>>,
    pub planning_s: Vec<f64>,
    pub periods: Vec<PeriodLog>,
}

#[derive(Serialize)]
struct TrialSummary<'a> {
    planner: Planner,
    seed: u64,
    acr: f64,
    step_cr: &'a [f64],
    planning_s: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_traj: Option<&'a [Vec<Point>]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gu_traj: Option<&'a [Vec<Point>]>,
}

impl TrialResult {
    pub fn to_json(&self, with_trajectories: bool) -> Result<String> {
        let s = TrialSummary {
            planner: self.planner,
            seed: self.seed,
            acr: self.acr,
            step_cr: &self.step_cr,
            planning_s: &self.planning_s,
            abs_traj: with_trajectories.then_some(&self.abs_traj[..]),
            gu_traj: with_trajectories.then_some(&self.gu_traj[..]),
        };
        Ok(serde_json::to_string(&s)?)
    }

    /// `step,cr` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,cr")?;
        for (i, cr) in self.step_cr.iter().enumerate() {
            writeln!(w, "{i},{cr}")?;
        }
        Ok(())
    }
}

/// GU positions at every step of a trial; index 0 is the initial state.
pub fn gu_trajectory(env: &Environment, params: &MissionParams, seed: u64) -> Vec<Vec<Point>> {
    let mut state = GuState::random(env, params.n_gus, params.gu_speed, &mut stream(seed, &[1]));
    let mut rng = stream(seed, &[2]);
    let n = params.time.n_steps();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            state = step_gus(env, &state, params.time.step_s, &mut rng);
        }
        out.push(state.positions.clone());
    }
    out
}

/// Initial ABS placement: unconstrained constrained-K-means on the initial GUs.
pub fn initial_placement(
    env: &Environment,
    params: &MissionParams,
    gus: &[Point],
    seed: u64,
) -> Vec<Point> {
    let grid = params.grid(env);
    let centre = Point::new(env.area_side() / 2.0, env.area_side() / 2.0);
    let c = MoveConstraints::new(
        env,
        grid,
        vec![centre; params.n_abs],
        f64::INFINITY,
        params.min_sep,
    )
    .expect("non-negative limits");
    ckmeans_init(gus, &c, &mut stream(seed, &[3]))
}

/// Candidates for one period, best first.
#[allow(clippy::too_many_arguments)]
pub fn plan_period(
    env: &Environment,
    params: &MissionParams,
    planner: Planner,
    predictor: PredictorChoice,
    abs: &[Point],
    snapshot: &[Point],
    seed: u64,
) -> Result<Vec<Candidate>> {
    let grid = params.grid(env);
    let constraints = MoveConstraints::new(
        env,
        grid,
        abs.to_vec(),
        params.max_disp(env),
        params.min_sep,
    )?;
    let base = constraints.base();
    let gu = quantize(snapshot, &grid, Role::Gu);
    let mut rng = stream(seed, &[]);
    let oracle;
    let blind = Blind { k: grid.k };
    let scoring: &dyn CoveragePredictor = match (planner, predictor) {
        (Planner::Nm, _) => &blind,
        (_, PredictorChoice::Learned(p)) => p,
        (_, PredictorChoice::Oracle) => {
            oracle = ExactOracle::new(env, params.channel, grid, params.n_abs, snapshot.to_vec())?;
            &oracle
        }
    };
    let mut scorer = Scorer::new(scoring, gu, grid, params.eta)?;
    let b = &params.budget;
    let mut out = match planner {
        Planner::Static => vec![],
        Planner::Nm => nm_search(
            &base,
            b.top_k - 1,
            b.rim,
            &constraints,
            &mut scorer,
            &mut rng,
        )?,
        Planner::SdlNm => nm_search(
            &base,
            b.n_mutations(),
            b.rim,
            &constraints,
            &mut scorer,
            &mut rng,
        )?,
        Planner::SdlMe => {
            map_elites(
                &base,
                b,
                &constraints,
                &mut scorer,
                params.bin_width(env),
                &mut rng,
            )?
            .top
        }
        Planner::GesBound => {
            let oracle =
                ExactOracle::new(env, params.channel, grid, params.n_abs, snapshot.to_vec())?;
            let (placement, lambda) = ges(&constraints, &oracle, params.search_radius(env))?;
            vec![Candidate {
                placement,
                predicted_cr: lambda,
                niche: None,
            }]
        }
    };
    out.truncate(b.top_k);
    Ok(out)
}

/// Outcome of executing one period.
#[derive(Clone, Debug)]
pub struct PeriodOutcome {
    pub step_cr: Vec<f64>,
    /// ABS positions at each step of the period.
    pub abs_traj: Vec<Vec<Point>>,
    pub measurements: Vec<Measurement>,
    pub elected: Option<usize>,
    pub serving_targets: Vec<Point>,
    /// ABS positions at the first step of the next period.
    pub end_abs: Vec<Point>,
}

/// Best measured candidate; ties go to the earlier measurement.
pub fn elect(measurements: &[Measurement]) -> Option<usize> {
    let mut best: Option<&Measurement> = None;
    for m in measurements {
        if best.is_none_or(|b| m.cr > b.cr) {
            best = Some(m);
        }
    }
    best.map(|m| m.candidate)
}

/// Runs the exploration and serving phases of one period.
///
/// `gus` holds the true GU positions for each of the `J` steps and
/// `first_step` is the trial index of the first one. With `serve_only` the
/// first candidate is served for the whole period without exploration.
#[allow(clippy::too_many_arguments)]
pub fn execute_period(
    env: &Environment,
    router: &Router,
    params: &MissionParams,
    start_abs: &[Point],
    candidates: &[Placement],
    gus: &[Vec<Point>],
    first_step: usize,
    serve_only: bool,
    advance_last: bool,
) -> Result<PeriodOutcome> {
    let grid = params.grid(env);
    let targets: Vec<Vec<Point>> = candidates.iter().map(|c| c.positions(&grid)).collect();
    let explore_steps = if serve_only {
        0
    } else {
        params.time.explore_steps()
    };
    let d0 = params.step_reach();
    let mut flight = Flight::new(router, start_abs.len());
    let mut abs = start_abs.to_vec();
    let mut next_cand = 0;
    let mut measurements = Vec::new();
    let mut serving: Option<(Option<usize>, Vec<Point>)> = None;
    let mut step_cr = Vec::with_capacity(gus.len());
    let mut abs_traj = Vec::with_capacity(gus.len());

    for (j, gu) in gus.iter().enumerate() {
        let cr = evaluate_coverage(env, &abs, gu, &params.channel)?.rate;
        step_cr.push(cr);
        abs_traj.push(abs.clone());
        if j < explore_steps {
            while next_cand < targets.len() && abs == targets[next_cand] {
                measurements.push(Measurement {
                    candidate: next_cand,
                    step: first_step + j,
                    cr,
                });
                next_cand += 1;
            }
        }
        if j + 1 == gus.len() && !advance_last {
            break;
        }
        let goal = if j + 1 < explore_steps && next_cand < targets.len() {
            targets[next_cand].clone()
        } else {
            let (_, t) = serving.get_or_insert_with(|| {
                if serve_only {
                    return match targets.first() {
                        Some(t) => (Some(0), t.clone()),
                        None => (None, abs.clone()),
                    };
                }
                match elect(&measurements) {
                    Some(c) => (Some(c), targets[c].clone()),
                    None => (None, abs.clone()),
                }
            });
            t.clone()
        };
        flight.retarget(&abs, &goal);
        abs = flight.advance(&abs, d0, params.min_sep);
    }
    let (elected, serving_targets) = serving.unwrap_or_else(|| {
        let e = if serve_only {
            (!targets.is_empty()).then_some(0)
        } else {
            elect(&measurements)
        };
        (e, e.map_or_else(|| abs.clone(), |c| targets[c].clone()))
    });
    Ok(PeriodOutcome {
        step_cr,
        abs_traj,
        measurements,
        elected,
        serving_targets,
        end_abs: abs,
    })
}

fn run(
    env: &Environment,
    params: &MissionParams,
    planner: Planner,
    predictor: PredictorChoice,
    seed: u64,
) -> Result<TrialResult> {
    params.validate(env)?;
    let gu_traj = gu_trajectory(env, params, seed);
    let mut abs = initial_placement(env, params, &gu_traj[0], seed);
    let router = Router::new(env);
    let t = &params.time;
    let (e_count, j_count, lag) = (t.n_periods(), t.steps_per_period(), t.plan_lag_steps());
    let mut step_cr = Vec::with_capacity(t.n_steps());
    let mut abs_traj = Vec::with_capacity(t.n_steps());
    let mut periods = Vec::with_capacity(e_count);
    let mut planning_s = Vec::with_capacity(e_count);

    for e in 0..e_count {
        let start = e * j_count;
        let bound = planner == Planner::GesBound;
        let snap = if bound || e == 0 {
            start
        } else {
            start.saturating_sub(lag)
        };
        let clock = Instant::now();
        let planned = if planner == Planner::Static {
            Ok(vec![])
        } else {
            plan_period(
                env,
                params,
                planner,
                predictor,
                &abs,
                &gu_traj[snap],
                crate::rng::derive(seed, &[4, e as u64]),
            )
        };
        let elapsed = clock.elapsed().as_secs_f64();
        let (candidates, planner_error) = match planned {
            Ok(c) => (c, None),
            Err(Error::Budget(m)) if bound => return Err(Error::Budget(m)),
            Err(err) => (vec![], Some(err.to_string())),
        };
        let placements: Vec<Placement> = candidates.iter().map(|c| c.placement.clone()).collect();
        let out = execute_period(
            env,
            &router,
            params,
            &abs,
            &placements,
            &gu_traj[start..start + j_count],
            start,
            bound,
            e + 1 < e_count,
        )?;
        step_cr.extend(out.step_cr);
        abs_traj.extend(out.abs_traj);
        abs = out.end_abs;
        planning_s.push(elapsed);
        periods.push(PeriodLog {
            candidates,
            measurements: out.measurements,
            elected: out.elected,
            serving_targets: out.serving_targets,
            planning_s: elapsed,
            planner_error,
        });
    }
    let acr = step_cr.iter().sum::<f64>() / step_cr.len() as f64;
    Ok(TrialResult {
        planner,
        seed,
        step_cr,
        acr,
        abs_traj,
        gu_traj,
        planning_s,
        periods,
    })
}

/// Runs one trial of the planning–exploration–serving loop.
pub fn run_trial(
    env: &Environment,
    params: &MissionParams,
    planner: Planner,
    predictor: PredictorChoice,
    seed: u64,
) -> Result<TrialResult> {
    if planner == Planner::GesBound {
        return run_ges_bound(env, params, seed);
    }
    run(env, params, planner, predictor, seed)
}

/// Idealised bound: the exhaustive-search placement for the true GU
/// positions at each period start is adopted without planning or exploration
/// time and served for the whole period.
pub fn run_ges_bound(env: &Environment, params: &MissionParams, seed: u64) -> Result<TrialResult> {
    run(
        env,
        params,
        Planner::GesBound,
        PredictorChoice::Oracle,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let t = TimeConfig::default();
        t.validate().unwrap();
        assert_eq!(
            (t.n_periods(), t.steps_per_period(), t.n_steps()),
            (20, 20, 400)
        );
        assert_eq!(t.plan_lag_steps(), 6);
        assert_eq!(t.explore_steps(), 10);
    }

    #[test]
    fn inexact_division_rejected() {
        let t = TimeConfig {
            step_s: 0.3,
            ..TimeConfig::default()
        };
        assert!(matches!(t.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn election_prefers_earlier_on_ties() {
        let m = |candidate, cr| Measurement {
            candidate,
            step: 0,
            cr,
        };
        assert_eq!(elect(&[m(0, 0.5), m(1, 0.7), m(2, 0.7)]), Some(1));
        assert_eq!(elect(&[]), None);
    }
}
