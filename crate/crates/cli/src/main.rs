//! `abscov`: environment generation, data collection, trials, scheme
//! comparison and niche heatmaps from a JSON experiment config.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 I/O failure,
//! 3 search budget exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abscov::datagen::{manifest_path, write_dataset};
use abscov::experiment::{compare, distinct_niches, niche_heatmap, trial_seed, ExperimentConfig};
use abscov::mission::{run_trial, Planner};
use abscov::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "abscov",
    version,
    about = "Multi-ABS coverage planning experiments"
)]
struct Cli {
    /// Experiment config (JSON). Omitted fields take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the environment (buildings) as JSON.
    GenEnv {
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect emulator training samples as JSON Lines plus a manifest.
    Collect {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `collect.n_trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run one trial of the configured planner.
    RunTrial {
        #[arg(long)]
        out: PathBuf,
        /// Also write `step,cr` rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Include ABS and GU trajectories in the JSON output.
        #[arg(long)]
        trajectories: bool,
        /// Trial index; the trial seed is derived from the config seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Matched-seed comparison of several planners.
    Compare {
        /// Directory receiving summary.csv and series.csv.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated planners; overrides `schemes`.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Overrides `n_trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Dump every candidate of one planning call with its niche and coverage.
    NicheHeatmap {
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let env = cfg.environment()?;
    match cli.cmd {
        Command::GenEnv { out } => {
            write_atomic(&out, env.to_json().as_bytes())?;
            eprintln!(
                "wrote {} buildings to {}",
                env.buildings().len(),
                out.display()
            );
        }
        Command::Collect { out, trials } => {
            let params = cfg.validate(&env)?;
            let n = trials.unwrap_or(cfg.collect.n_trials);
            let m = write_dataset(&out, &env, &params, cfg.collect.strategy, n, cfg.seed)?;
            eprintln!(
                "wrote {} samples to {} ({})",
                m.count,
                out.display(),
                manifest_path(&out).display()
            );
        }
        Command::RunTrial {
            out,
            csv,
            trajectories,
            trial,
        } => {
            let params = cfg.validate(&env)?;
            let predictor = cfg.predictor()?;
            let res = run_trial(
                &env,
                &params,
                cfg.planner,
                predictor.choice(),
                trial_seed(cfg.seed, trial),
            )?;
            write_atomic(&out, res.to_json(trajectories)?.as_bytes())?;
            if let Some(csv) = csv {
                let mut buf = Vec::new();
                res.write_csv(&mut buf)?;
                write_atomic(&csv, &buf)?;
            }
            eprintln!("{} ACR {:.4}", cfg.planner.name(), res.acr);
        }
        Command::Compare {
            out,
            schemes,
            trials,
        } => {
            let params = cfg.validate(&env)?;
            let predictor = cfg.predictor()?;
            let schemes = match schemes {
                Some(names) => names
                    .iter()
                    .map(|s| Planner::parse(s.trim()).ok_or_else(|| unknown_planner(s)))
                    .collect::<Result<Vec<_>, _>>()?,
                None => cfg.schemes.clone(),
            };
            let n = trials.unwrap_or(cfg.n_trials);
            let cmp = compare(&env, &params, &schemes, n, cfg.seed, predictor.choice())?;
            fs::create_dir_all(&out)?;
            let mut summary = Vec::new();
            cmp.write_summary_csv(&mut summary)?;
            write_atomic(&out.join("summary.csv"), &summary)?;
            let mut series = Vec::new();
            cmp.write_series_csv(&mut series)?;
            write_atomic(&out.join("series.csv"), &series)?;
            for r in &cmp.rows {
                eprintln!(
                    "{:<10} {:.4} ± {:.4}",
                    r.scheme.name(),
                    r.mean_acr,
                    r.std_acr
                );
            }
        }
        Command::NicheHeatmap { out } => {
            let params = cfg.validate(&env)?;
            let predictor = cfg.predictor()?;
            let rows = niche_heatmap(
                &env,
                &params,
                cfg.planner,
                predictor.choice(),
                trial_seed(cfg.seed, 0),
            )?;
            let mut buf = Vec::new();
            for r in &rows {
                serde_json::to_writer(&mut buf, r)?;
                buf.push(b'\n');
            }
            write_atomic(&out, &buf)?;
            eprintln!(
                "{} candidates over {} niches",
                rows.len(),
                distinct_niches(&rows)
            );
        }
    }
    Ok(())
}

fn unknown_planner(s: &str) -> Error {
    Error::Config {
        path: "schemes".into(),
        msg: format!("unknown planner {s:?}"),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Budget(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
