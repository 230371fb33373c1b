//! L1 discretization of the left-sided Caputo derivative on a uniform grid.
//!
//! For samples ψ_j = ψ(j·dt) the operator at node n is
//!
//! ```text
//! D_n = dt^{-α} Σ_{k=0}^{n-1} c_k (ψ_{n-k} - ψ_{n-k-1}),
//! c_k = ((k+1)^{1-α} - k^{1-α}) / Γ(2-α)
//! ```
//!
//! Besides the scalar operator this module carries the batched forward and
//! adjoint applications on five-component series that the physics residual
//! needs, including the analytic derivative with respect to α.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::specfun::{digamma_f, gamma_f};

/// Uniform time grid t_j = j·dt, j = 0..=n_steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("grid step must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Grid covering [0, horizon]; the horizon must be a whole number of steps.
    pub fn from_horizon(dt: f64, horizon: f64) -> Result<Self> {
        let steps = horizon / dt;
        let n = steps.round();
        if !(n >= 1.0) || (steps - n).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Domain(format!("horizon {horizon} is not a positive multiple of dt = {dt}")));
        }
        TimeGrid::new(dt, n as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Network input for node `j`: time divided by the horizon.
    pub fn scaled(&self, j: usize) -> f64 {
        j as f64 / self.n_steps as f64
    }

    /// Grid index of time `t`, if `t` falls on a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let j = x.round();
        if j < 0.0 || (x - j).abs() > 1e-7 || j as usize > self.n_steps {
            None
        } else {
            Some(j as usize)
        }
    }
}

/// L1 weights c_k for k = 0..n_max together with ∂c_k/∂α.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Stencil {
    alpha: f64,
    dt: f64,
    weights: Vec<f64>,
    dweights: Vec<f64>,
}

/// Builds the L1 stencil for memory order `alpha` on step `dt`.
pub fn l1_weights(alpha: f64, dt: f64, n_max: usize) -> Result<L1Stencil> {
    L1Stencil::new(alpha, dt, n_max)
}

impl L1Stencil {
    pub fn new(alpha: f64, dt: f64, n_max: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("memory order must lie in (0, 1], got {alpha}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("step must be positive, got {dt}")));
        }
        if n_max == 0 {
            return Err(Error::Domain("stencil needs at least one weight".into()));
        }
        let p = 1.0 - alpha;
        let inv_gamma = 1.0 / gamma_f(2.0 - alpha)?;
        let psi = digamma_f(2.0 - alpha)?;

        let mut weights = Vec::with_capacity(n_max);
        let mut dweights = Vec::with_capacity(n_max);
        // k = 0: (1^p - 0^p) = 1 for every α, including the 0^0 limit at α = 1.
        weights.push(inv_gamma);
        dweights.push(inv_gamma * psi);
        for k in 1..n_max {
            let kf = k as f64;
            let ln_k = kf.ln();
            let ln_k1 = (kf + 1.0).ln();
            // (k+1)^p - k^p without cancellation.
            let kp = (p * ln_k).exp();
            let diff = kp * (p * (1.0 / kf).ln_1p()).exp_m1();
            let d_diff = -ln_k1 * (p * ln_k1).exp() + ln_k * kp;
            let c = diff * inv_gamma;
            weights.push(c);
            dweights.push(d_diff * inv_gamma + c * psi);
        }
        Ok(L1Stencil { alpha, dt, weights, dweights })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dweights_dalpha(&self) -> &[f64] {
        &self.dweights
    }

    /// dt^{-α}
    pub fn scale(&self) -> f64 {
        self.dt.powf(-self.alpha)
    }

    /// d(dt^{-α})/dα
    pub fn dscale_dalpha(&self) -> f64 {
        -self.dt.ln() * self.scale()
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if (dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Mismatch(format!("series step {dt} differs from stencil step {}", self.dt)));
        }
        Ok(())
    }

    fn check_node(&self, n: usize, last: usize) -> Result<()> {
        if n == 0 || n > last {
            return Err(Error::Index { index: n, max: last });
        }
        if n > self.len() {
            return Err(Error::Index { index: n, max: self.len() });
        }
        Ok(())
    }
}

/// Samples of a scalar function on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    dt: f64,
    values: Vec<f64>,
}

impl SampledSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("step must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("a sampled series needs at least two values".into()));
        }
        Ok(SampledSeries { dt, values })
    }

    /// Samples `f` at t_j = j·dt for j = 0..=n_steps.
    pub fn from_fn(dt: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledSeries::new(dt, (0..=n_steps).map(|j| f(j as f64 * dt)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }
}

/// L1 approximation of the Caputo derivative of `series` at node `n`.
pub fn caputo_l1(series: &SampledSeries, stencil: &L1Stencil, n: usize) -> Result<f64> {
    stencil.check_dt(series.dt)?;
    stencil.check_node(n, series.last_index())?;
    let v = &series.values;
    let c = stencil.weights();
    let sum: f64 = (0..n).map(|k| c[k] * (v[n - k] - v[n - k - 1])).sum();
    Ok(stencil.scale() * sum)
}

/// Gradient of [`caputo_l1`] with respect to ψ_0..=ψ_n and to α.
pub fn caputo_l1_grad(series: &SampledSeries, stencil: &L1Stencil, n: usize) -> Result<(Vec<f64>, f64)> {
    stencil.check_dt(series.dt)?;
    stencil.check_node(n, series.last_index())?;
    let v = &series.values;
    let c = stencil.weights();
    let dc = stencil.dweights_dalpha();
    let scale = stencil.scale();

    let mut dvalues = vec![0.0; n + 1];
    let mut weighted = 0.0;
    let mut dweighted = 0.0;
    for k in 0..n {
        let diff = v[n - k] - v[n - k - 1];
        dvalues[n - k] += scale * c[k];
        dvalues[n - k - 1] -= scale * c[k];
        weighted += c[k] * diff;
        dweighted += dc[k] * diff;
    }
    let dalpha = stencil.dscale_dalpha() * weighted + scale * dweighted;
    Ok((dvalues, dalpha))
}

/// Five-component sample, one entry per compartment.
pub type Vec5 = [f64; 5];

/// Caputo derivatives of a five-component series at nodes 1..=n_last,
/// plus their derivatives with respect to α. Entry `m` holds node `m + 1`.
pub fn caputo_l1_batch(
    values: &[Vec5],
    stencil: &L1Stencil,
    n_last: usize,
    exec: Execution,
) -> Result<(Vec<Vec5>, Vec<Vec5>)> {
    let last = values.len().saturating_sub(1);
    if n_last == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    stencil.check_node(n_last, last)?;
    let diffs = differences(values);
    let c = stencil.weights();
    let dc = stencil.dweights_dalpha();
    let scale = stencil.scale();
    let dscale = stencil.dscale_dalpha();

    let per_chunk = exec.map_chunks(n_last, 32, |range| {
        let mut out = Vec::with_capacity(range.len());
        for m in range {
            let n = m + 1;
            let mut acc = [0.0; 5];
            let mut dacc = [0.0; 5];
            for k in 0..n {
                let d = &diffs[n - k - 1];
                for x in 0..5 {
                    acc[x] += c[k] * d[x];
                    dacc[x] += dc[k] * d[x];
                }
            }
            let mut val = [0.0; 5];
            let mut dval = [0.0; 5];
            for x in 0..5 {
                val[x] = scale * acc[x];
                dval[x] = dscale * acc[x] + scale * dacc[x];
            }
            out.push((val, dval));
        }
        out
    });
    Ok(per_chunk.into_iter().flatten().unzip())
}

/// Adjoint of [`caputo_l1_batch`]: given cotangents `g[m]` for nodes
/// m + 1 = 1..=n_last, returns the cotangent of every sample ψ_0..=ψ_N.
pub fn caputo_l1_adjoint(
    cotangent: &[Vec5],
    stencil: &L1Stencil,
    n_nodes: usize,
    exec: Execution,
) -> Result<Vec<Vec5>> {
    let n_last = cotangent.len();
    if n_last + 1 > n_nodes {
        return Err(Error::Index { index: n_last, max: n_nodes.saturating_sub(1) });
    }
    if n_last > stencil.len() {
        return Err(Error::Index { index: n_last, max: stencil.len() });
    }
    let c = stencil.weights();
    let scale = stencil.scale();
    // gdiff[m - 1] = dt^{-α} Σ_{n ≥ m} g_n c_{n-m} for difference Δ_m = ψ_m - ψ_{m-1}.
    let gdiff: Vec<Vec5> = exec
        .map_chunks(n_last, 32, |range| {
            range
                .map(|i| {
                    let m = i + 1;
                    let mut acc = [0.0; 5];
                    for n in m..=n_last {
                        let g = &cotangent[n - 1];
                        let w = c[n - m];
                        for x in 0..5 {
                            acc[x] += w * g[x];
                        }
                    }
                    acc.map(|a| a * scale)
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    let mut out = vec![[0.0; 5]; n_nodes];
    for (i, gd) in gdiff.iter().enumerate() {
        let m = i + 1;
        for x in 0..5 {
            out[m][x] += gd[x];
            out[m - 1][x] -= gd[x];
        }
    }
    Ok(out)
}

fn differences(values: &[Vec5]) -> Vec<Vec5> {
    values.windows(2).map(|w| std::array::from_fn(|x| w[1][x] - w[0][x])).collect()
}
