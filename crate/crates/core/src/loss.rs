//! The composite PINN loss and its exact gradient.
//!
//! ```text
//! L = λ_data L_data + λ_phys L_phys + λ_ic L_ic + λ_cons L_cons + L_reg
//! L_reg = λ_θ ‖w‖² + λ_Θ ‖z‖²
//! ```
//!
//! Collocation nodes are the grid nodes 1..=colloc_n. The physics residual
//! at node n is the L1 derivative of the network output minus F evaluated
//! at the same node, which is exactly the relation the implicit solver
//! satisfies.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fracops::{caputo_l1_adjoint, caputo_l1_batch, L1Stencil, TimeGrid, Vec5};
use crate::fracsolver::fmt17;
use crate::model::{
    constrain, constrain_grad, rhs_jacobian_vec, rhs_vec, EpidemicParams, ParamBounds, RawParams, SimplexState,
};
use crate::net::{Network, Tape};

/// Nodes per work unit in the parallel forward and reverse sweeps.
const NODE_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub data: f64,
    pub phys: f64,
    pub ic: f64,
    pub cons: f64,
    pub reg_theta: f64,
    pub reg_params: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { data: 1.0, phys: 1.0, ic: 10.0, cons: 1.0, reg_theta: 1e-6, reg_params: 0.0 }
    }
}

impl LossWeights {
    pub fn validated(self) -> Result<Self> {
        let all = [self.data, self.phys, self.ic, self.cons, self.reg_theta, self.reg_params];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("loss weights must be non-negative: {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(self)
    }
}

/// Observed compartments at grid times. Unobserved entries hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    times: Vec<f64>,
    values: Vec<Vec5>,
    mask: [bool; 5],
}

impl ObservationSet {
    pub fn new(times: Vec<f64>, values: Vec<Vec5>, mask: [bool; 5]) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Domain("observation times and values differ in length".into()));
        }
        if !mask.iter().any(|m| *m) {
            return Err(Error::Domain("observation mask selects no compartment".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("observation times must be non-negative and strictly increasing".into()));
        }
        let mut values = values;
        for row in &mut values {
            for (x, v) in row.iter_mut().enumerate() {
                if !mask[x] {
                    *v = f64::NAN;
                } else if !v.is_finite() {
                    return Err(Error::Domain(format!("observed value {v} is not finite")));
                }
            }
        }
        Ok(ObservationSet { times, values, mask })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec5] {
        &self.values
    }

    pub fn mask(&self) -> [bool; 5] {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keeps only rows whose index satisfies `keep`.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> ObservationSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&j| keep(j)).collect();
        ObservationSet {
            times: idx.iter().map(|&j| self.times[j]).collect(),
            values: idx.iter().map(|&j| self.values[j]).collect(),
            mask: self.mask,
        }
    }

    /// Same times and mask, new values.
    pub fn with_values(&self, values: Vec<Vec5>) -> Result<ObservationSet> {
        ObservationSet::new(self.times.clone(), values, self.mask)
    }

    /// Grid node of every observation time.
    pub fn grid_nodes(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        self.times
            .iter()
            .map(|&t| {
                grid.index_of(t)
                    .ok_or_else(|| Error::Mismatch(format!("observation time {t} is not a node of the grid")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub phys: f64,
    pub ic: f64,
    pub cons: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.data, self.phys, self.ic, self.cons, self.reg, self.total].iter().all(|v| v.is_finite())
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("data", self.data),
            ("phys", self.phys),
            ("ic", self.ic),
            ("cons", self.cons),
            ("reg", self.reg),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Data and initial-condition terms only.
    Pretrain,
    /// All five terms.
    Joint,
}

/// How α enters the physics residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaControl {
    /// α = constrain(z_alpha), trainable.
    Free,
    /// α held at the given value; z_alpha receives no gradient.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub net: Vec<f64>,
    pub raw: [f64; 5],
}

/// Everything the loss needs besides the trainables.
#[derive(Debug)]
pub struct PinnProblem {
    grid: TimeGrid,
    obs: ObservationSet,
    obs_nodes: Vec<usize>,
    ic: SimplexState,
    weights: LossWeights,
    bounds: ParamBounds,
    colloc_n: usize,
    exec: Execution,
    stencil: Mutex<Option<Arc<L1Stencil>>>,
}

impl Clone for PinnProblem {
    fn clone(&self) -> Self {
        PinnProblem {
            grid: self.grid,
            obs: self.obs.clone(),
            obs_nodes: self.obs_nodes.clone(),
            ic: self.ic,
            weights: self.weights,
            bounds: self.bounds,
            colloc_n: self.colloc_n,
            exec: self.exec,
            stencil: Mutex::new(None),
        }
    }
}

impl PinnProblem {
    pub fn new(
        grid: TimeGrid,
        obs: ObservationSet,
        ic: SimplexState,
        weights: LossWeights,
        bounds: ParamBounds,
    ) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let obs_nodes = obs.grid_nodes(&grid)?;
        Ok(PinnProblem {
            grid,
            obs,
            obs_nodes,
            ic: ic.validated()?,
            weights: weights.validated()?,
            bounds: bounds.validated()?,
            colloc_n: grid.n_steps(),
            exec: Execution::default(),
            stencil: Mutex::new(None),
        })
    }

    pub fn with_colloc_n(mut self, colloc_n: usize) -> Result<Self> {
        if colloc_n == 0 || colloc_n > self.grid.n_steps() {
            return Err(Error::Mismatch(format!(
                "collocation count {colloc_n} must lie in 1..={}",
                self.grid.n_steps()
            )));
        }
        self.colloc_n = colloc_n;
        Ok(self)
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Result<Self> {
        self.weights = weights.validated()?;
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn obs(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn ic(&self) -> &SimplexState {
        &self.ic
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn colloc_n(&self) -> usize {
        self.colloc_n
    }

    pub fn exec(&self) -> Execution {
        self.exec
    }

    /// Constrained parameters as seen by the residual.
    pub fn params(&self, raw: &RawParams, alpha: AlphaControl) -> EpidemicParams {
        let p = constrain(raw, &self.bounds);
        match alpha {
            AlphaControl::Free => p,
            AlphaControl::Fixed(a) => p.with_alpha(a),
        }
    }

    /// Stencil for `alpha`, rebuilt only when α changes.
    pub fn stencil(&self, alpha: f64) -> Result<Arc<L1Stencil>> {
        let mut slot = self.stencil.lock().expect("stencil cache poisoned");
        if let Some(st) = slot.as_ref() {
            if st.alpha().to_bits() == alpha.to_bits() {
                return Ok(Arc::clone(st));
            }
        }
        let st = Arc::new(L1Stencil::new(alpha, self.grid.dt(), self.colloc_n)?);
        *slot = Some(Arc::clone(&st));
        Ok(st)
    }

    /// Loss value and gradient with respect to network weights and raw parameters.
    pub fn evaluate(
        &self,
        net: &Network,
        raw: &RawParams,
        mode: LossMode,
        alpha: AlphaControl,
    ) -> Result<(LossBreakdown, LossGradient)> {
        let w = &self.weights;
        let n_nodes = self.grid.n_nodes();
        // Nodes that need a forward pass.
        let last_obs = *self.obs_nodes.last().expect("non-empty observations");
        let nodes: Vec<usize> = match mode {
            LossMode::Joint => (0..=self.colloc_n.max(last_obs)).collect(),
            LossMode::Pretrain => {
                let mut v = self.obs_nodes.clone();
                v.push(0);
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        let mut slot = vec![usize::MAX; n_nodes];
        for (s, &j) in nodes.iter().enumerate() {
            slot[j] = s;
        }
        let forward: Vec<(Vec5, Tape)> = self
            .exec
            .map_chunks(nodes.len(), NODE_CHUNK, |r| {
                r.map(|s| net.forward(self.grid.scaled(nodes[s]))).collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
        let pred: Vec<Vec5> = forward.iter().map(|(y, _)| *y).collect();
        let mut cot = vec![[0.0; 5]; nodes.len()];
        let mut out = LossBreakdown::default();
        let mut g_raw = [0.0; 5];

        // data
        let n_obs = self.obs.len() as f64;
        let mask = self.obs.mask();
        for (row, &j) in self.obs.values().iter().zip(&self.obs_nodes) {
            let s = slot[j];
            for x in (0..5).filter(|&x| mask[x]) {
                let diff = pred[s][x] - row[x];
                out.data += diff * diff / n_obs;
                cot[s][x] += w.data * 2.0 * diff / n_obs;
            }
        }

        // initial condition
        let ic = self.ic.to_array();
        let s0 = slot[0];
        for x in 0..5 {
            let diff = pred[s0][x] - ic[x];
            out.ic += diff * diff;
            cot[s0][x] += w.ic * 2.0 * diff;
        }

        if mode == LossMode::Joint {
            let m = self.colloc_n as f64;
            // conservation (pred is indexed by node in joint mode)
            for n in 1..=self.colloc_n {
                let c = pred[n].iter().sum::<f64>() - 1.0;
                out.cons += c * c / m;
                let g = w.cons * 2.0 * c / m;
                for x in 0..5 {
                    cot[n][x] += g;
                }
            }

            // physics
            let params = self.params(raw, alpha);
            let stencil = self.stencil(params.alpha)?;
            let (caputo, dcaputo) = caputo_l1_batch(&pred, &stencil, self.colloc_n, self.exec)?;
            let mut g_res = vec![[0.0; 5]; self.colloc_n];
            let mut g_rates = [0.0; 4];
            let mut g_alpha = 0.0;
            for n in 1..=self.colloc_n {
                let f = rhs_vec(&pred[n], &params)?;
                let (js, jp) = rhs_jacobian_vec(&pred[n], &params)?;
                let mut g = [0.0; 5];
                for x in 0..5 {
                    let r = caputo[n - 1][x] - f[x];
                    out.phys += r * r / m;
                    g[x] = w.phys * 2.0 * r / m;
                    g_alpha += g[x] * dcaputo[n - 1][x];
                }
                for c in 0..5 {
                    cot[n][c] -= (0..5).map(|r| js[r][c] * g[r]).sum::<f64>();
                }
                for (c, gr) in g_rates.iter_mut().enumerate() {
                    *gr -= (0..5).map(|r| jp[r][c] * g[r]).sum::<f64>();
                }
                g_res[n - 1] = g;
            }
            let adj = caputo_l1_adjoint(&g_res, &stencil, self.colloc_n + 1, self.exec)?;
            for (n, a) in adj.iter().enumerate() {
                for x in 0..5 {
                    cot[n][x] += a[x];
                }
            }
            let cg = constrain_grad(raw, &self.bounds);
            for j in 0..4 {
                g_raw[j] = g_rates[j] * cg[j];
            }
            if alpha == AlphaControl::Free {
                g_raw[4] = g_alpha * cg[4];
            }

            // regularization
            let z = raw.to_array();
            let free_alpha = alpha == AlphaControl::Free;
            let z_norm: f64 = z.iter().take(if free_alpha { 5 } else { 4 }).map(|v| v * v).sum();
            out.reg = w.reg_theta * net.weight_norm_sq() + w.reg_params * z_norm;
            for j in 0..4 {
                g_raw[j] += 2.0 * w.reg_params * z[j];
            }
            if free_alpha {
                g_raw[4] += 2.0 * w.reg_params * z[4];
            }
        }

        out.total = w.data * out.data + w.ic * out.ic;
        if mode == LossMode::Joint {
            out.total += w.phys * out.phys + w.cons * out.cons + out.reg;
        }

        // reverse sweep through the network
        let n_params = net.num_params();
        let partial: Vec<Result<Vec<f64>>> = self.exec.map_chunks(nodes.len(), NODE_CHUNK, |r| {
            let mut g = vec![0.0; n_params];
            for s in r {
                if cot[s].iter().any(|c| *c != 0.0) {
                    net.backward(&forward[s].1, &cot[s], &mut g)?;
                }
            }
            Ok(g)
        });
        let mut g_net = vec![0.0; n_params];
        for part in partial {
            for (a, b) in g_net.iter_mut().zip(part?) {
                *a += b;
            }
        }
        if mode == LossMode::Joint && w.reg_theta > 0.0 {
            for l in 0..net.n_layers() {
                for k in net.weight_range(l) {
                    g_net[k] += 2.0 * w.reg_theta * net.params()[k];
                }
            }
        }
        Ok((out, LossGradient { net: g_net, raw: g_raw }))
    }
}

/// See [`PinnProblem::evaluate`].
pub fn loss_total(
    problem: &PinnProblem,
    net: &Network,
    raw: &RawParams,
    mode: LossMode,
    alpha: AlphaControl,
) -> Result<(LossBreakdown, LossGradient)> {
    problem.evaluate(net, raw, mode, alpha)
}

/// Network output at every grid node.
pub fn predict_grid(net: &Network, grid: &TimeGrid, exec: Execution) -> Vec<Vec5> {
    exec.map_chunks(grid.n_nodes(), NODE_CHUNK, |r| r.map(|j| net.eval(grid.scaled(j))).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Writes network predictions on every grid node as `t,s,e,i,r,d`.
pub fn write_predictions_csv<W: std::io::Write>(net: &Network, grid: &TimeGrid, exec: Execution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "e", "i", "r", "d"])?;
    for (j, y) in predict_grid(net, grid, exec).iter().enumerate() {
        let mut row = vec![fmt17(grid.time(j))];
        row.extend(y.iter().map(|v| fmt17(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean over observation times of the squared error summed over observed compartments.
pub fn loss_data_values(pred_at_obs: &[Vec5], obs: &ObservationSet) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if pred_at_obs.len() != obs.len() {
        return Err(Error::Mismatch("one prediction per observation time is required".into()));
    }
    let mask = obs.mask();
    let sum: f64 = pred_at_obs
        .iter()
        .zip(obs.values())
        .map(|(p, o)| (0..5).filter(|&x| mask[x]).map(|x| (p[x] - o[x]).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / obs.len() as f64)
}

pub fn loss_data(net: &Network, grid: &TimeGrid, obs: &ObservationSet) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let pred: Vec<Vec5> = obs.grid_nodes(grid)?.iter().map(|&j| net.eval(grid.scaled(j))).collect();
    loss_data_values(&pred, obs)
}

/// Mean over nodes 1..=colloc_n of the squared physics residual.
pub fn loss_physics_values(
    pred: &[Vec5],
    stencil: &L1Stencil,
    params: &EpidemicParams,
    colloc_n: usize,
    exec: Execution,
) -> Result<f64> {
    if colloc_n == 0 || colloc_n >= pred.len() {
        return Err(Error::Mismatch(format!(
            "collocation count {colloc_n} needs a grid of more than {colloc_n} nodes, got {}",
            pred.len()
        )));
    }
    let params = params.with_alpha(stencil.alpha());
    let (caputo, _) = caputo_l1_batch(pred, stencil, colloc_n, exec)?;
    let mut sum = 0.0;
    for n in 1..=colloc_n {
        let f = rhs_vec(&pred[n], &params)?;
        sum += (0..5).map(|x| (caputo[n - 1][x] - f[x]).powi(2)).sum::<f64>();
    }
    Ok(sum / colloc_n as f64)
}

pub fn loss_physics(
    net: &Network,
    grid: &TimeGrid,
    stencil: &L1Stencil,
    params: &EpidemicParams,
    colloc_n: usize,
) -> Result<f64> {
    if (stencil.dt() - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::Mismatch(format!("stencil step {} differs from grid step {}", stencil.dt(), grid.dt())));
    }
    let pred = predict_grid(net, grid, Execution::default());
    loss_physics_values(&pred, stencil, params, colloc_n, Execution::default())
}

pub fn loss_ic_value(pred0: &Vec5, ic: &SimplexState) -> f64 {
    let ic = ic.to_array();
    (0..5).map(|x| (pred0[x] - ic[x]).powi(2)).sum()
}

pub fn loss_ic(net: &Network, ic: &SimplexState) -> f64 {
    loss_ic_value(&net.eval(0.0), ic)
}

/// Mean over nodes 1..=colloc_n of (Σ x̂ − 1)².
pub fn loss_conservation_values(pred: &[Vec5], colloc_n: usize) -> Result<f64> {
    if colloc_n == 0 || colloc_n >= pred.len() {
        return Err(Error::Mismatch(format!("collocation count {colloc_n} exceeds the grid")));
    }
    let sum: f64 = pred[1..=colloc_n].iter().map(|p| (p.iter().sum::<f64>() - 1.0).powi(2)).sum();
    Ok(sum / colloc_n as f64)
}

pub fn loss_conservation(net: &Network, grid: &TimeGrid, colloc_n: usize) -> Result<f64> {
    loss_conservation_values(&predict_grid(net, grid, Execution::default()), colloc_n)
}

/// λ_θ ‖weights‖² + λ_Θ ‖raw‖².
pub fn loss_reg(net: &Network, raw: &RawParams, weights: &LossWeights) -> f64 {
    let z: f64 = raw.to_array().iter().map(|v| v * v).sum();
    weights.reg_theta * net.weight_norm_sq() + weights.reg_params * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_xavier, OutputHead};

    fn ic() -> SimplexState {
        SimplexState::new(0.99, 0.005, 0.005, 0.0, 0.0).unwrap()
    }

    #[test]
    fn data_term_examples() {
        let obs = ObservationSet::new(vec![0.0], vec![[0.5, 0.1, 0.1, 0.2, 0.1]], [true; 5]).unwrap();
        assert_eq!(loss_data_values(&[[0.5, 0.1, 0.1, 0.2, 0.1]], &obs).unwrap(), 0.0);
        let v = loss_data_values(&[[0.6, 0.1, 0.1, 0.2, 0.1]], &obs).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        let empty = ObservationSet::new(vec![], vec![], [true; 5]).unwrap();
        assert!(matches!(loss_data_values(&[], &empty), Err(Error::EmptyObservations)));
    }

    #[test]
    fn masked_compartment_is_ignored() {
        let mask = [true, false, true, true, true];
        let obs = ObservationSet::new(vec![0.0], vec![[0.5, 0.1, 0.1, 0.2, 0.1]], mask).unwrap();
        assert!(obs.values()[0][1].is_nan());
        let a = loss_data_values(&[[0.5, 0.1, 0.1, 0.2, 0.1]], &obs).unwrap();
        let b = loss_data_values(&[[0.5, 0.9, 0.1, 0.2, 0.1]], &obs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ic_term_examples() {
        assert_eq!(loss_ic_value(&ic().to_array(), &ic()), 0.0);
        let mut p = ic().to_array();
        p[0] -= 0.2;
        assert!((loss_ic_value(&p, &ic()) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn conservation_examples() {
        let pred = vec![[0.25; 5]; 4];
        assert!((loss_conservation_values(&pred, 3).unwrap() - 0.0625).abs() < 1e-15);
        let pred = vec![[0.2; 5]; 4];
        assert!(loss_conservation_values(&pred, 3).unwrap() < 1e-30);
        let net = init_xavier(&[1, 8, 5], OutputHead::Softmax, 0).unwrap();
        let g = TimeGrid::new(0.5, 40).unwrap();
        assert!(loss_conservation(&net, &g, 40).unwrap() <= 1e-28);
    }

    #[test]
    fn reg_examples() {
        let mut net = Network::zeros(&[1, 3, 5], OutputHead::Softmax).unwrap();
        let raw = RawParams::default();
        let lw = LossWeights { reg_theta: 0.5, reg_params: 0.0, ..Default::default() };
        assert_eq!(loss_reg(&net, &raw, &lw), 0.0);
        net.params_mut()[0] = 2.0;
        assert_eq!(loss_reg(&net, &raw, &lw), 2.0);
        let mut net = init_xavier(&[1, 6, 5], OutputHead::Softmax, 4).unwrap();
        let before = loss_reg(&net, &raw, &lw);
        for p in net.params_mut() {
            *p *= 2.0;
        }
        assert!((loss_reg(&net, &raw, &lw) - 4.0 * before).abs() < 1e-12);
    }

    #[test]
    fn disease_free_constant_has_no_residual() {
        let pred = vec![[0.9, 0.0, 0.0, 0.08, 0.02]; 11];
        let st = L1Stencil::new(0.8, 0.5, 10).unwrap();
        let p = EpidemicParams::new(0.3, 0.1, 0.05, 0.01, 0.8).unwrap();
        assert_eq!(loss_physics_values(&pred, &st, &p, 10, Execution::Sequential).unwrap(), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights { data: -1.0, ..Default::default() }.validated().is_err());
        let zero = LossWeights { data: 0.0, phys: 0.0, ic: 0.0, cons: 0.0, reg_theta: 0.0, reg_params: 0.0 };
        assert!(zero.validated().is_err());
    }

    #[test]
    fn observation_validation() {
        assert!(ObservationSet::new(vec![1.0, 0.5], vec![[0.2; 5]; 2], [true; 5]).is_err());
        assert!(ObservationSet::new(vec![0.0], vec![[0.2; 5]], [false; 5]).is_err());
        assert!(ObservationSet::new(vec![0.0], vec![[f64::NAN; 5]], [true; 5]).is_err());
        let g = TimeGrid::new(1.0, 4).unwrap();
        let obs = ObservationSet::new(vec![0.5], vec![[0.2; 5]], [true; 5]).unwrap();
        assert!(obs.grid_nodes(&g).is_err());
    }

    #[test]
    fn problem_rejects_empty_observations() {
        let empty = ObservationSet::new(vec![], vec![], [true; 5]).unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let r = PinnProblem::new(g, empty, ic(), LossWeights::default(), ParamBounds::default());
        assert!(matches!(r, Err(Error::EmptyObservations)));
    }
}
