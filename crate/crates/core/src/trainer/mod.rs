//! Staged training: data-only pretraining with α frozen at 1, then a joint
//! phase (Adam, then L-BFGS) over network weights and raw parameters.

mod adam;
mod lbfgs;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_minimize, lbfgs_optimize, Evaluation, LbfgsConfig, LbfgsOutcome, LbfgsStatus, LineSearchConfig};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fracops::TimeGrid;
use crate::fracsolver::fmt17;
use crate::loss::{AlphaControl, LossBreakdown, LossMode, LossWeights, ObservationSet, PinnProblem};
use crate::model::{unconstrain, EpidemicParams, ParamBounds, RawParams, SimplexState, COMPARTMENTS};
use crate::net::{init_xavier, Network, OutputHead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub tol: f64,
    pub patience: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig { tol: 1e-8, patience: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub head: OutputHead,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden: vec![64, 64, 64], head: OutputHead::Softmax }
    }
}

impl NetworkConfig {
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![1];
        dims.extend(&self.hidden);
        dims.push(COMPARTMENTS.len());
        dims
    }
}

/// Starting point for the epidemiological parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    /// β, σ, γ, μ
    pub rates: [f64; 4],
    pub alpha: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        InitParams { rates: [0.2, 0.1385, 0.0535, 0.0155], alpha: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub pretrain_iters: usize,
    pub early_stop: EarlyStopConfig,
    pub lambdas: LossWeights,
    pub bounds: ParamBounds,
    pub init: InitParams,
    /// Collocation nodes 1..=colloc_n; all grid nodes when absent.
    pub colloc_n: Option<usize>,
    /// Abort once the total loss exceeds this multiple of its initial value.
    pub divergence_factor: f64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            network: NetworkConfig::default(),
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            pretrain_iters: 2000,
            early_stop: EarlyStopConfig::default(),
            lambdas: LossWeights::default(),
            bounds: ParamBounds::default(),
            init: InitParams::default(),
            colloc_n: None,
            divergence_factor: 1e6,
            exec: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validated(self) -> Result<Self> {
        self.adam.validated()?;
        self.lbfgs.validated()?;
        self.lambdas.validated()?;
        self.bounds.validated()?;
        if self.early_stop.patience == 0 || !(self.early_stop.tol > 0.0) {
            return Err(Error::Config("early_stop needs patience >= 1 and tol > 0".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence_factor must exceed 1".into()));
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(self)
    }

    fn initial_raw(&self) -> Result<RawParams> {
        let [beta, sigma, gamma_r, mu] = self.init.rates;
        let p = EpidemicParams { beta, sigma, gamma_r, mu, alpha: self.init.alpha };
        unconstrain(&p, &self.bounds).map_err(|e| Error::Config(format!("initial parameters: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    EarlyStop,
    Converged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub phase: Phase,
    pub loss: LossBreakdown,
    pub params: EpidemicParams,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: EpidemicParams,
    pub raw: RawParams,
    pub network: Network,
    pub history: Vec<IterRecord>,
    /// Global iteration index at the end of pretraining, joint Adam, and L-BFGS.
    pub phase_boundaries: [usize; 3],
    pub stop_reason: StopReason,
    /// Joint loss at the returned trainables.
    pub terminal: LossBreakdown,
    /// Set when L-BFGS stopped on a failed line search.
    pub line_search_failed: bool,
}

/// Fires once the relative improvement over the best value has stayed
/// below `tol` for `patience` consecutive checks.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    cfg: EarlyStopConfig,
    best: f64,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(cfg: EarlyStopConfig) -> Self {
        EarlyStopper { cfg, best: f64::INFINITY, stale: 0 }
    }

    /// Records `value`; true when training should stop.
    pub fn update(&mut self, value: f64) -> bool {
        if self.best.is_finite() {
            let improvement = (self.best - value) / self.best.abs().max(f64::MIN_POSITIVE);
            if improvement < self.cfg.tol {
                self.stale += 1;
            } else {
                self.stale = 0;
            }
        }
        self.best = self.best.min(value);
        self.stale >= self.cfg.patience
    }
}

/// Fits with α free.
pub fn fit(obs: &ObservationSet, ic: &SimplexState, grid: &TimeGrid, cfg: &TrainConfig) -> Result<FitResult> {
    fit_with_alpha(obs, ic, grid, cfg, AlphaControl::Free)
}

/// Fits with α either free or frozen at a given value.
pub fn fit_with_alpha(
    obs: &ObservationSet,
    ic: &SimplexState,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    alpha: AlphaControl,
) -> Result<FitResult> {
    let cfg = cfg.clone().validated()?;
    if !has_signal(obs) {
        return Err(Error::NoSignal);
    }
    let mut problem = PinnProblem::new(*grid, obs.clone(), *ic, cfg.lambdas, cfg.bounds)?.with_exec(cfg.exec);
    if let Some(n) = cfg.colloc_n {
        problem = problem.with_colloc_n(n)?;
    }
    if let AlphaControl::Fixed(a) = alpha {
        if !(a > cfg.bounds.alpha_min && a <= 1.0) {
            return Err(Error::Domain(format!("frozen alpha {a} outside ({}, 1]", cfg.bounds.alpha_min)));
        }
    }
    Trainer::new(&problem, &cfg, alpha)?.run()
}

fn has_signal(obs: &ObservationSet) -> bool {
    let mask = obs.mask();
    let Some(first) = obs.values().first() else {
        return false;
    };
    obs.values().iter().any(|row| (0..5).any(|x| mask[x] && row[x] != first[x]))
}

struct Trainer<'a> {
    problem: &'a PinnProblem,
    cfg: &'a TrainConfig,
    alpha: AlphaControl,
    net: Network,
    raw: RawParams,
    history: Vec<IterRecord>,
    iter: usize,
}

impl<'a> Trainer<'a> {
    fn new(problem: &'a PinnProblem, cfg: &'a TrainConfig, alpha: AlphaControl) -> Result<Self> {
        let net = init_xavier(&cfg.network.dims(), cfg.network.head, cfg.seed)?;
        let raw = cfg.initial_raw()?;
        Ok(Trainer { problem, cfg, alpha, net, raw, history: Vec::new(), iter: 0 })
    }

    fn record(&mut self, phase: Phase, loss: LossBreakdown, alpha: AlphaControl) -> Result<()> {
        if let Some(term) = loss.non_finite_term() {
            return Err(Error::NonFinite { iter: self.iter, term: term.into() });
        }
        let params = self.problem.params(&self.raw, alpha);
        self.history.push(IterRecord { iter: self.iter, phase, loss, params });
        Ok(())
    }

    fn check_divergence(&self, initial: f64, total: f64) -> Result<()> {
        if total > self.cfg.divergence_factor * initial {
            return Err(Error::Divergence {
                iter: self.iter,
                detail: format!("total loss {total:e} exceeds {:e} x initial {initial:e}", self.cfg.divergence_factor),
            });
        }
        Ok(())
    }

    /// Adam over the flat vector [network | raw], with `free_raw` selecting
    /// which raw coordinates may move. Returns true on early stop.
    fn adam_phase(&mut self, phase: Phase, mode: LossMode, alpha: AlphaControl, iters: usize) -> Result<bool> {
        let n_net = self.net.num_params();
        let free_raw = match (mode, alpha) {
            (LossMode::Pretrain, _) => [false; 5],
            (LossMode::Joint, AlphaControl::Free) => [true; 5],
            (LossMode::Joint, AlphaControl::Fixed(_)) => [true, true, true, true, false],
        };
        let mut state = AdamState::new(n_net + 5);
        let mut stopper = EarlyStopper::new(self.cfg.early_stop);
        let mut theta: Vec<f64> = self.net.params().iter().copied().chain(self.raw.to_array()).collect();
        let mut grad = vec![0.0; n_net + 5];
        let mut initial = None;
        for k in 0..iters {
            let (loss, g) = self.problem.evaluate(&self.net, &self.raw, mode, alpha)?;
            self.record(phase, loss, alpha)?;
            let initial = *initial.get_or_insert(loss.total);
            self.check_divergence(initial, loss.total)?;
            if stopper.update(loss.total) {
                return Ok(true);
            }
            grad[..n_net].copy_from_slice(&g.net);
            for j in 0..5 {
                grad[n_net + j] = if free_raw[j] { g.raw[j] } else { 0.0 };
            }
            state.step(&mut theta, &grad, k, &self.cfg.adam).map_err(|e| match e {
                Error::NonFinite { term, .. } => Error::NonFinite { iter: self.iter, term },
                other => other,
            })?;
            let frozen_alpha = self.raw.z_alpha;
            self.net.set_params(&theta[..n_net])?;
            let mut z = [0.0; 5];
            z.copy_from_slice(&theta[n_net..]);
            self.raw = RawParams::from_array(z);
            if !free_raw[4] {
                debug_assert_eq!(self.raw.z_alpha.to_bits(), frozen_alpha.to_bits());
            }
            self.iter += 1;
        }
        Ok(false)
    }

    /// L-BFGS over [network | raw]; a frozen α keeps its coordinate fixed.
    fn lbfgs_phase(&mut self) -> Result<(StopReason, bool)> {
        let n_net = self.net.num_params();
        let alpha = self.alpha;
        let mask_alpha = matches!(alpha, AlphaControl::Fixed(_));
        let problem = self.problem;
        let template = self.net.clone();
        let z_alpha = self.raw.z_alpha;
        let split = |x: &[f64]| -> Result<(Network, RawParams)> {
            let mut net = template.clone();
            net.set_params(&x[..n_net])?;
            let mut z = [0.0; 5];
            z.copy_from_slice(&x[n_net..]);
            if mask_alpha {
                z[4] = z_alpha;
            }
            Ok((net, RawParams::from_array(z)))
        };
        let objective = |x: &[f64]| -> Result<Evaluation<(LossBreakdown, RawParams)>> {
            let (net, raw) = split(x)?;
            let (loss, g) = problem.evaluate(&net, &raw, LossMode::Joint, alpha)?;
            let mut grad = g.net;
            grad.extend_from_slice(&g.raw);
            if mask_alpha {
                grad[n_net + 4] = 0.0;
            }
            Ok(Evaluation { value: loss.total, grad, extra: (loss, raw) })
        };
        let x0: Vec<f64> = self.net.params().iter().copied().chain(self.raw.to_array()).collect();
        let start_iter = self.iter;
        let mut stopper = EarlyStopper::new(self.cfg.early_stop);
        let mut early = false;
        let mut accepted: Vec<(LossBreakdown, RawParams)> = Vec::new();
        let outcome = lbfgs_minimize(objective, &x0, &self.cfg.lbfgs, |_, eval| {
            accepted.push(eval.extra);
            early = stopper.update(eval.value);
            !early
        });
        let outcome = outcome?;
        let (net, raw) = split(&outcome.x)?;
        self.net = net;
        self.raw = raw;
        for (k, (loss, raw)) in accepted.into_iter().enumerate() {
            self.iter = start_iter + k + 1;
            if let Some(term) = loss.non_finite_term() {
                return Err(Error::NonFinite { iter: self.iter, term: term.into() });
            }
            let params = self.problem.params(&raw, alpha);
            self.history.push(IterRecord { iter: self.iter, phase: Phase::Lbfgs, loss, params });
        }
        let failed = outcome.status == LbfgsStatus::LineSearchFailed;
        let reason = match outcome.status {
            LbfgsStatus::MaxIters => StopReason::MaxIters,
            LbfgsStatus::Stopped if early => StopReason::EarlyStop,
            _ => StopReason::Converged,
        };
        Ok((reason, failed))
    }

    fn run(mut self) -> Result<FitResult> {
        let pre_alpha = AlphaControl::Fixed(1.0);
        self.adam_phase(Phase::Pretrain, LossMode::Pretrain, pre_alpha, self.cfg.pretrain_iters)?;
        let b0 = self.iter;
        let adam_early = self.adam_phase(Phase::Adam, LossMode::Joint, self.alpha, self.cfg.adam.max_iters)?;
        let b1 = self.iter;
        let (stop_reason, line_search_failed) = if self.cfg.lbfgs.max_iters > 0 {
            self.lbfgs_phase()?
        } else if adam_early {
            (StopReason::EarlyStop, false)
        } else {
            (StopReason::MaxIters, false)
        };
        let b2 = self.iter;
        let (terminal, _) = self.problem.evaluate(&self.net, &self.raw, LossMode::Joint, self.alpha)?;
        if let Some(term) = terminal.non_finite_term() {
            return Err(Error::NonFinite { iter: self.iter, term: term.into() });
        }
        let params = self.problem.params(&self.raw, self.alpha).validated()?;
        Ok(FitResult {
            params,
            raw: self.raw,
            network: self.net,
            history: self.history,
            phase_boundaries: [b0, b1, b2],
            stop_reason,
            terminal,
            line_search_failed,
        })
    }
}

/// Writes the per-iteration log as CSV.
pub fn write_training_log<W: Write>(history: &[IterRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iter", "phase", "total", "data", "phys", "ic", "cons", "reg", "beta", "sigma", "gamma", "mu", "alpha",
    ])?;
    for r in history {
        let l = &r.loss;
        let p = &r.params;
        let mut row = vec![r.iter.to_string(), r.phase.as_str().to_string()];
        row.extend([l.total, l.data, l.phys, l.ic, l.cons, l.reg].map(fmt17));
        row.extend([p.beta, p.sigma, p.gamma_r, p.mu, p.alpha].map(fmt17));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracsolver::{simulate, SolverConfig};

    fn tiny() -> (ObservationSet, SimplexState, TimeGrid, TrainConfig) {
        let ic = SimplexState::new(0.9, 0.05, 0.05, 0.0, 0.0).unwrap();
        let p = EpidemicParams::new(0.25, 0.13, 0.052, 0.005, 0.9).unwrap();
        let tr = simulate(&ic, &p, 2.0, 30, &SolverConfig::default()).unwrap();
        let obs = ObservationSet::new((0..=30).map(|j| tr.time(j)).collect(), tr.arrays(), [true; 5]).unwrap();
        let cfg = TrainConfig {
            network: NetworkConfig { hidden: vec![8, 8], head: OutputHead::Softmax },
            pretrain_iters: 40,
            adam: AdamConfig { max_iters: 40, lr0: 1e-2, ..Default::default() },
            lbfgs: LbfgsConfig { max_iters: 10, ..Default::default() },
            ..Default::default()
        };
        (obs, ic, tr.grid().unwrap(), cfg)
    }

    #[test]
    fn early_stop_fires_after_patience_stale_checks() {
        let cfg = EarlyStopConfig { tol: 1e-3, patience: 3 };
        let mut es = EarlyStopper::new(cfg);
        let script = [10.0, 9.0, 8.9999, 8.9998, 8.0, 7.9999, 7.9999, 7.9999, 7.0];
        let fired: Vec<bool> = script.iter().map(|&v| es.update(v)).collect();
        assert_eq!(fired, [false, false, false, false, false, false, false, true, false]);
    }

    #[test]
    fn early_stop_counts_worsening_as_stale() {
        let mut es = EarlyStopper::new(EarlyStopConfig { tol: 1e-8, patience: 2 });
        assert!(!es.update(1.0));
        assert!(!es.update(2.0));
        assert!(es.update(1.5));
    }

    #[test]
    fn pretraining_freezes_alpha() {
        let (obs, ic, grid, mut cfg) = tiny();
        cfg.adam.max_iters = 0;
        cfg.lbfgs.max_iters = 0;
        let r = fit(&obs, &ic, &grid, &cfg).unwrap();
        let z0 = cfg.initial_raw().unwrap();
        assert_eq!(r.raw, z0);
        assert_eq!(r.history.len(), 40);
        assert!(r.history.iter().all(|h| h.phase == Phase::Pretrain && h.params.alpha == 1.0));
        assert!(r.history.iter().all(|h| h.loss.phys == 0.0 && h.loss.cons == 0.0));
        assert_eq!(r.phase_boundaries, [40, 40, 40]);
    }

    #[test]
    fn staged_fit_is_deterministic_and_admissible() {
        let (obs, ic, grid, cfg) = tiny();
        let a = fit(&obs, &ic, &grid, &cfg).unwrap();
        let b = fit(&obs, &ic, &grid, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network.params(), b.network.params());
        assert_eq!(a.phase_boundaries[0], 40);
        assert_eq!(a.phase_boundaries[1], 80);
        assert!(a.phase_boundaries[2] <= 90);
        for h in &a.history {
            assert!(h.loss.total.is_finite());
            assert!(h.params.validated().is_ok());
            assert!(h.params.alpha > cfg.bounds.alpha_min && h.params.beta <= cfg.bounds.beta_max);
        }
        let lb: Vec<f64> = a.history.iter().filter(|h| h.phase == Phase::Lbfgs).map(|h| h.loss.total).collect();
        assert!(lb.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn frozen_alpha_never_moves() {
        let (obs, ic, grid, cfg) = tiny();
        let r = fit_with_alpha(&obs, &ic, &grid, &cfg, AlphaControl::Fixed(0.85)).unwrap();
        assert_eq!(r.params.alpha, 0.85);
        assert_eq!(r.raw.z_alpha, cfg.initial_raw().unwrap().z_alpha);
        assert!(r.history.iter().filter(|h| h.phase != Phase::Pretrain).all(|h| h.params.alpha == 0.85));
        assert!(fit_with_alpha(&obs, &ic, &grid, &cfg, AlphaControl::Fixed(0.4)).is_err());
    }

    #[test]
    fn disease_free_data_is_rejected() {
        let (obs, ic, grid, cfg) = tiny();
        let flat = obs.with_values(vec![[1.0, 0.0, 0.0, 0.0, 0.0]; obs.len()]).unwrap();
        assert!(matches!(fit(&flat, &ic, &grid, &cfg), Err(Error::NoSignal)));
    }

    #[test]
    fn invalid_configs() {
        let (obs, ic, grid, cfg) = tiny();
        let bad = TrainConfig { early_stop: EarlyStopConfig { patience: 0, tol: 1e-8 }, ..cfg.clone() };
        assert!(matches!(fit(&obs, &ic, &grid, &bad), Err(Error::Config(_))));
        let bad = TrainConfig { init: InitParams { rates: [2.0, 0.1, 0.05, 0.01], alpha: 0.99 }, ..cfg };
        assert!(matches!(fit(&obs, &ic, &grid, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn training_log_layout() {
        let (obs, ic, grid, mut cfg) = tiny();
        cfg.lbfgs.max_iters = 2;
        let r = fit(&obs, &ic, &grid, &cfg).unwrap();
        let mut buf = Vec::new();
        write_training_log(&r.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,phase,total,data,phys,ic,cons,reg,beta,sigma,gamma,mu,alpha");
        assert_eq!(lines.count(), r.history.len());
    }
}
