use std::io::Write;
use std::path::{Path, PathBuf};

use fracpinn::analysis::{ablation, bootstrap, profile_alpha, write_profile_csv, BootstrapSummary, LossTerm};
use fracpinn::data::{
    load_csv, load_observations_csv, make_synthetic, reconstruct_observations, write_observations_csv,
};
use fracpinn::loss::write_predictions_csv;
use fracpinn::trainer::{write_training_log, FitResult, StopReason};
use fracpinn::{simulate, EpidemicParams, LossBreakdown, ObservationSet, SimplexState, TimeGrid, Trajectory};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;

/// Where fitting commands read their data from.
#[derive(Debug, Clone, Default)]
pub struct DataSource {
    /// Observation CSV (`t,s,e,i,r,d,mask`); the initial state comes from the config.
    pub obs: Option<PathBuf>,
    /// Cumulative case CSV (`day,confirmed,recovered,deaths`).
    pub cases: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn start(out: &Path, command: &'static str, cfg: &RunConfig) -> Result<OutputDir, CliError> {
    let dir = OutputDir::new(out, command, cfg)?;
    dir.write("config.json", |w| writeln!(w, "{}", cfg.to_json()).map_err(io_err(Path::new("config.json"))))?;
    Ok(dir)
}

fn run_simulation(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let grid = cfg.grid()?;
    Ok(simulate(&cfg.model.initial_state, &cfg.model.params, grid.dt(), grid.n_steps(), &cfg.solver)?)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let traj = run_simulation(cfg)?;
    let dir = start(out, "simulate", cfg)?;
    dir.write("trajectory.csv", |w| Ok(traj.write_csv(w)?))?;
    let (t_peak, i_peak) = fracpinn::fracsolver::infectious_peak(&traj);
    Ok(format!("simulated {} nodes; infectious peak {i_peak:.6} at t = {t_peak}", traj.len()))
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let traj = run_simulation(cfg)?;
    let obs = make_synthetic(&traj, cfg.synthetic.every, &cfg.synthetic.noise())?;
    let dir = start(out, "generate", cfg)?;
    dir.write("trajectory.csv", |w| Ok(traj.write_csv(w)?))?;
    dir.write("observations.csv", |w| Ok(write_observations_csv(&obs, w)?))?;
    Ok(format!("wrote {} observation rows", obs.len()))
}

/// Observations, initial state, and training grid for a fitting command.
fn load_problem(
    cfg: &RunConfig,
    src: &DataSource,
    dir: &mut OutputDir,
) -> Result<(ObservationSet, SimplexState, TimeGrid), CliError> {
    let (obs, ic) = match (&src.obs, &src.cases) {
        (Some(path), None) => {
            dir.add_input(path)?;
            (load_observations_csv(path)?, cfg.model.initial_state)
        }
        (None, Some(path)) => {
            dir.add_input(path)?;
            reconstruct_observations(&load_csv(path)?, &cfg.data)?
        }
        _ => return Err(CliError::Config("exactly one of --obs or --cases is required".into())),
    };
    let last = *obs.times().last().ok_or(fracpinn::Error::EmptyObservations)?;
    let grid = TimeGrid::from_horizon(cfg.grid.dt, last)?;
    Ok((obs, ic, grid))
}

#[derive(Debug, Serialize)]
struct Iterations {
    pretrain: usize,
    adam: usize,
    lbfgs: usize,
}

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<&'a str>,
    params: EpidemicParams,
    stop_reason: StopReason,
    iterations: Iterations,
    phase_boundaries: [usize; 3],
    terminal: LossBreakdown,
    line_search_failed: bool,
    checkpoint: &'a str,
}

fn write_fit(
    dir: &OutputDir,
    fit: &FitResult,
    grid: &TimeGrid,
    cfg: &RunConfig,
    ablation: Option<&str>,
) -> Result<(), CliError> {
    let [b0, b1, b2] = fit.phase_boundaries;
    let ckpt = "network.ckpt";
    dir.write(ckpt, |w| Ok(fit.network.write_checkpoint(&fit.raw, w)?))?;
    dir.write("training_log.csv", |w| Ok(write_training_log(&fit.history, w)?))?;
    dir.write("fitted_trajectory.csv", |w| Ok(write_predictions_csv(&fit.network, grid, cfg.train.exec, w)?))?;
    let summary = FitSummary {
        ablation,
        params: fit.params,
        stop_reason: fit.stop_reason,
        iterations: Iterations { pretrain: b0, adam: b1 - b0, lbfgs: b2 - b1 },
        phase_boundaries: fit.phase_boundaries,
        terminal: fit.terminal,
        line_search_failed: fit.line_search_failed,
        checkpoint: ckpt,
    };
    dir.write_json("fit.json", &summary)?;
    Ok(())
}

fn describe(p: &EpidemicParams) -> String {
    format!(
        "alpha = {:.6}, beta = {:.6}, sigma = {:.6}, gamma = {:.6}, mu = {:.6}",
        p.alpha, p.beta, p.sigma, p.gamma_r, p.mu
    )
}

pub fn cmd_fit(cfg: &RunConfig, src: &DataSource, out: &Path) -> Result<String, CliError> {
    let mut dir = start(out, "fit", cfg)?;
    let (obs, ic, grid) = load_problem(cfg, src, &mut dir)?;
    let fit = fracpinn::fit(&obs, &ic, &grid, &cfg.train)?;
    write_fit(&dir, &fit, &grid, cfg, None)?;
    Ok(describe(&fit.params))
}

pub fn cmd_profile(cfg: &RunConfig, src: &DataSource, out: &Path) -> Result<String, CliError> {
    let mut dir = start(out, "profile", cfg)?;
    let (obs, ic, grid) = load_problem(cfg, src, &mut dir)?;
    let alpha_grid = &cfg.analysis.alpha_grid;
    let points = profile_alpha(&obs, &ic, &grid, &cfg.train, alpha_grid);
    let mut failed = 0;
    for (alpha, point) in alpha_grid.iter().zip(&points) {
        if let Err(e) = point {
            log::error!("profile point alpha = {alpha} failed: {e}");
            failed += 1;
        }
    }
    dir.write("profile.csv", |w| Ok(write_profile_csv(alpha_grid, &points, w)?))?;
    let best = fracpinn::analysis::profile_argmin(&points).map(|k| alpha_grid[k]);
    Ok(match best {
        Some(a) => format!("profile over {} values ({failed} failed); minimum at alpha = {a}", alpha_grid.len()),
        None => format!("profile over {} values; no point succeeded", alpha_grid.len()),
    })
}

pub fn cmd_bootstrap(cfg: &RunConfig, src: &DataSource, out: &Path) -> Result<String, CliError> {
    let mut dir = start(out, "bootstrap", cfg)?;
    let (obs, ic, grid) = load_problem(cfg, src, &mut dir)?;
    let summary: BootstrapSummary =
        bootstrap(&obs, &ic, &grid, &cfg.train, cfg.analysis.n_replicates, cfg.analysis.bootstrap_seed)?;
    dir.write_json("bootstrap.json", &summary)?;
    let a = summary.alpha;
    Ok(format!(
        "{} replicates ({} failed); alpha = {:.6} [{:.6}, {:.6}]",
        summary.n_replicates, summary.n_failed, a.point, a.lower, a.upper
    ))
}

pub fn cmd_ablate(cfg: &RunConfig, src: &DataSource, disable: Option<&str>, out: &Path) -> Result<String, CliError> {
    let names: Vec<String> = match disable {
        Some(list) => list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
        None => cfg.analysis.ablate.clone(),
    };
    let terms = names.iter().map(|n| n.parse::<LossTerm>()).collect::<Result<Vec<_>, _>>()?;
    let mut dir = start(out, "ablate", cfg)?;
    let (obs, ic, grid) = load_problem(cfg, src, &mut dir)?;
    let result = ablation(&obs, &ic, &grid, &cfg.train, &terms)?;
    write_fit(&dir, &result.fit, &grid, cfg, Some(&result.signature))?;
    Ok(format!("{}: {}", result.signature, describe(&result.fit.params)))
}
