//! Identifiability and uncertainty tooling built on repeated fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{TimeGrid, Vec5};
use crate::fracsolver::{fmt17, Trajectory};
use crate::loss::{AlphaControl, ObservationSet};
use crate::model::{EpidemicParams, SimplexState};
use crate::net::Network;
use crate::trainer::{fit, fit_with_alpha, FitResult, TrainConfig};

/// One frozen-α refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub alpha_fixed: f64,
    pub refit_params: EpidemicParams,
    pub terminal_loss: f64,
}

/// Refits with α frozen at each grid value. Point `k` uses seed
/// `cfg.seed + k`; failures are returned in place rather than aborting.
pub fn profile_alpha(
    obs: &ObservationSet,
    ic: &SimplexState,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    alpha_grid: &[f64],
) -> Vec<Result<ProfilePoint>> {
    cfg.exec.map_range(alpha_grid.len(), |k| {
        let alpha = alpha_grid[k];
        let mut cfg = cfg.clone();
        cfg.seed = cfg.seed.wrapping_add(k as u64);
        let fit = fit_with_alpha(obs, ic, grid, &cfg, AlphaControl::Fixed(alpha))?;
        Ok(ProfilePoint { alpha_fixed: alpha, refit_params: fit.params, terminal_loss: fit.terminal.total })
    })
}

/// Writes `alpha,loss,beta,sigma,gamma,mu`; failed points keep only `alpha`.
pub fn write_profile_csv<W: std::io::Write>(alpha_grid: &[f64], points: &[Result<ProfilePoint>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "loss", "beta", "sigma", "gamma", "mu"])?;
    for (alpha, point) in alpha_grid.iter().zip(points) {
        let row = match point {
            Ok(p) => {
                let q = &p.refit_params;
                [*alpha, p.terminal_loss, q.beta, q.sigma, q.gamma_r, q.mu].map(fmt17).to_vec()
            }
            Err(_) => {
                let mut row = vec![fmt17(*alpha)];
                row.extend(std::iter::repeat_n(String::new(), 5));
                row
            }
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Index of the smallest loss among successful profile points.
pub fn profile_argmin(points: &[Result<ProfilePoint>]) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.as_ref().ok().map(|p| (k, p.terminal_loss)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_replicates: usize,
    pub n_failed: usize,
    pub point: EpidemicParams,
    pub beta: Interval,
    pub sigma: Interval,
    pub gamma: Interval,
    pub mu: Interval,
    pub alpha: Interval,
    /// Estimates of the successful replicates, in replicate order.
    pub replicates: Vec<EpidemicParams>,
}

impl BootstrapSummary {
    /// Intervals in (β, σ, γ, μ, α) order.
    pub fn intervals(&self) -> [Interval; 5] {
        [self.beta, self.sigma, self.gamma, self.mu, self.alpha]
    }
}

/// Network predictions at the observation times.
pub fn fitted_at_observations(net: &Network, grid: &TimeGrid, obs: &ObservationSet) -> Result<Vec<Vec5>> {
    Ok(obs.grid_nodes(grid)?.into_iter().map(|j| net.eval(grid.scaled(j))).collect())
}

/// Residual bootstrap: refit on fitted values plus residual rows drawn with
/// replacement, then take 2.5% and 97.5% percentiles of each parameter over
/// the replicate estimates together with the point estimate.
pub fn bootstrap(
    obs: &ObservationSet,
    ic: &SimplexState,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    n_replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if n_replicates < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {n_replicates}")));
    }
    let base = fit(obs, ic, grid, cfg)?;
    let fitted = fitted_at_observations(&base.network, grid, obs)?;
    let residuals: Vec<Vec5> =
        obs.values().iter().zip(&fitted).map(|(o, f)| std::array::from_fn(|x| o[x] - f[x])).collect();
    let n_obs = residuals.len();
    let outcomes: Vec<Result<EpidemicParams>> = cfg.exec.map_range(n_replicates, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let values: Vec<Vec5> = fitted
            .iter()
            .map(|f| {
                let r = residuals[rng.random_range(0..n_obs)];
                std::array::from_fn(|x| f[x] + r[x])
            })
            .collect();
        let resampled = obs.with_values(values)?;
        let mut cfg = cfg.clone();
        cfg.seed = cfg.seed.wrapping_add(b as u64 + 1);
        Ok(fit(&resampled, ic, grid, &cfg)?.params)
    });
    let mut replicates = Vec::with_capacity(n_replicates);
    let mut n_failed = 0;
    for (b, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(p) => replicates.push(p),
            Err(e) => {
                log::warn!("bootstrap replicate {b} failed: {e}");
                n_failed += 1;
            }
        }
    }
    if 2 * n_failed > n_replicates {
        return Err(Error::Bootstrap { failed: n_failed, total: n_replicates });
    }
    let point = base.params;
    let interval = |get: fn(&EpidemicParams) -> f64| {
        let mut cloud: Vec<f64> = replicates.iter().map(get).collect();
        cloud.push(get(&point));
        cloud.sort_by(f64::total_cmp);
        let p = get(&point);
        Interval { point: p, lower: quantile(&cloud, 0.025).min(p), upper: quantile(&cloud, 0.975).max(p) }
    };
    Ok(BootstrapSummary {
        n_replicates,
        n_failed,
        point,
        beta: interval(|p| p.beta),
        sigma: interval(|p| p.sigma),
        gamma: interval(|p| p.gamma_r),
        mu: interval(|p| p.mu),
        alpha: interval(|p| p.alpha),
        replicates,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Loss terms that can be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    Phys,
    Cons,
    IcTerm,
    Reg,
}

impl LossTerm {
    pub fn as_str(self) -> &'static str {
        match self {
            LossTerm::Phys => "phys",
            LossTerm::Cons => "cons",
            LossTerm::IcTerm => "ic_term",
            LossTerm::Reg => "reg",
        }
    }
}

impl std::str::FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phys" => Ok(LossTerm::Phys),
            "cons" => Ok(LossTerm::Cons),
            "ic_term" => Ok(LossTerm::IcTerm),
            "reg" => Ok(LossTerm::Reg),
            other => Err(Error::Config(format!("unknown loss term {other:?} (phys, cons, ic_term, reg)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    /// `full`, or the disabled terms joined by `+`, e.g. `no-cons+no-phys`.
    pub signature: String,
    pub disabled: Vec<LossTerm>,
    pub fit: FitResult,
}

pub fn ablation_signature(disable: &[LossTerm]) -> String {
    let mut terms = disable.to_vec();
    terms.sort();
    terms.dedup();
    if terms.is_empty() {
        return "full".into();
    }
    terms.iter().map(|t| format!("no-{}", t.as_str())).collect::<Vec<_>>().join("+")
}

/// Fits with the named loss weights set to zero.
pub fn ablation(
    obs: &ObservationSet,
    ic: &SimplexState,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    disable: &[LossTerm],
) -> Result<AblationResult> {
    let mut cfg = cfg.clone();
    let mut disabled = disable.to_vec();
    disabled.sort();
    disabled.dedup();
    for term in &disabled {
        match term {
            LossTerm::Phys => cfg.lambdas.phys = 0.0,
            LossTerm::Cons => cfg.lambdas.cons = 0.0,
            LossTerm::IcTerm => cfg.lambdas.ic = 0.0,
            LossTerm::Reg => {
                cfg.lambdas.reg_theta = 0.0;
                cfg.lambdas.reg_params = 0.0;
            }
        }
    }
    let fit = fit(obs, ic, grid, &cfg)?;
    Ok(AblationResult { signature: ablation_signature(&disabled), disabled, fit })
}

/// Root-mean-square error of the network against a reference trajectory
/// on the same grid, over the given nodes and all five compartments.
pub fn trajectory_rmse(net: &Network, truth: &Trajectory, nodes: &[usize]) -> Result<f64> {
    let grid = truth.grid()?;
    if nodes.is_empty() {
        return Err(Error::Domain("no nodes to compare".into()));
    }
    let mut acc = 0.0;
    for &j in nodes {
        if j >= truth.len() {
            return Err(Error::Index { index: j, max: truth.len() - 1 });
        }
        let y = net.eval(grid.scaled(j));
        let x = truth.states()[j].to_array();
        acc += (0..5).map(|c| (y[c] - x[c]).powi(2)).sum::<f64>();
    }
    Ok((acc / (5 * nodes.len()) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.025) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn signatures() {
        assert_eq!(ablation_signature(&[]), "full");
        assert_eq!(ablation_signature(&[LossTerm::Reg, LossTerm::Phys, LossTerm::Reg]), "no-phys+no-reg");
        assert_eq!("ic_term".parse::<LossTerm>().unwrap(), LossTerm::IcTerm);
        assert!("data".parse::<LossTerm>().is_err());
    }

    #[test]
    fn argmin_skips_failures() {
        let p = |a: f64, l: f64| {
            Ok(ProfilePoint {
                alpha_fixed: a,
                refit_params: EpidemicParams::new(0.2, 0.1, 0.05, 0.01, a).unwrap(),
                terminal_loss: l,
            })
        };
        let pts = vec![p(0.8, 3.0), Err(Error::Domain("x".into())), p(0.9, 1.0), p(1.0, 2.0)];
        assert_eq!(profile_argmin(&pts), Some(2));
        assert_eq!(profile_argmin(&[]), None);
    }
}
