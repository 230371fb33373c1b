//! Forward simulation of the normalized fractional SEIRD system.
//!
//! The L1 relation at node n,
//!
//! ```text
//! dt^{-α} Σ_{k=0}^{n-1} c_k (x_{n-k} - x_{n-k-1}) = F(x_*),
//! ```
//!
//! is solved for x_n with x_* = x_{n-1} (explicit) or x_* = x_n
//! (implicit). No projection onto the simplex is applied.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{L1Stencil, TimeGrid, Vec5};
use crate::model::{rhs_vec, EpidemicParams, SimplexState, MIN_LIVING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    #[default]
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { scheme: Scheme::Implicit, fixed_point_tol: 1e-12, fixed_point_max_iter: 50 }
    }
}

impl SolverConfig {
    pub fn explicit() -> Self {
        SolverConfig { scheme: Scheme::Explicit, ..Default::default() }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.fixed_point_tol > 0.0) || self.fixed_point_max_iter == 0 {
            return Err(Error::Config("fixed-point tolerance and iteration cap must be positive".into()));
        }
        Ok(self)
    }
}

/// States on the uniform grid t_j = j·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    states: Vec<SimplexState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<SimplexState>) -> Result<Self> {
        if !(dt > 0.0) || states.is_empty() {
            return Err(Error::Domain("trajectory needs a positive step and at least one state".into()));
        }
        Ok(Trajectory { dt, states })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn states(&self) -> &[SimplexState] {
        &self.states
    }

    pub fn arrays(&self) -> Vec<Vec5> {
        self.states.iter().map(SimplexState::to_array).collect()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt, self.states.len().saturating_sub(1))
    }

    /// Keeps every `every`-th node, starting at node 0.
    pub fn subsample(&self, every: usize) -> Trajectory {
        let every = every.max(1);
        Trajectory { dt: self.dt * every as f64, states: self.states.iter().step_by(every).copied().collect() }
    }

    /// CSV with header `t,s,e,i,r,d` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "s", "e", "i", "r", "d"])?;
        for (j, st) in self.states.iter().enumerate() {
            let mut row = vec![fmt17(self.time(j))];
            row.extend(st.to_array().iter().map(|v| fmt17(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integrates the fractional system with the L1 scheme.
pub fn simulate(
    ic: &SimplexState,
    params: &EpidemicParams,
    dt: f64,
    n_steps: usize,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let ic = ic.validated()?;
    let params = params.validated()?;
    let cfg = cfg.validated()?;
    if n_steps == 0 {
        return Err(Error::Domain("simulation needs at least one step".into()));
    }
    let stencil = L1Stencil::new(params.alpha, dt, n_steps)?;
    let c = stencil.weights();
    let h = 1.0 / (stencil.scale() * c[0]);
    let ratios: Vec<f64> = c.iter().map(|ck| ck / c[0]).collect();

    let mut xs: Vec<Vec5> = Vec::with_capacity(n_steps + 1);
    let mut diffs: Vec<Vec5> = Vec::with_capacity(n_steps);
    xs.push(ic.to_array());

    for n in 1..=n_steps {
        let prev = xs[n - 1];
        // History H = x_{n-1} - Σ_{k≥1} (c_k/c_0) Δ_{n-k}.
        let mut hist = prev;
        for k in 1..n {
            let d = &diffs[n - k - 1];
            for x in 0..5 {
                hist[x] -= ratios[k] * d[x];
            }
        }
        let star = match cfg.scheme {
            Scheme::Explicit => prev,
            Scheme::Implicit => fixed_point(&hist, prev, h, &params, &cfg, n)?,
        };
        let f = rhs_vec(&star, &params)?;
        let next: Vec5 = std::array::from_fn(|x| hist[x] + h * f[x]);
        if 1.0 - next[4] < MIN_LIVING {
            return Err(Error::Singular(1.0 - next[4]));
        }
        diffs.push(std::array::from_fn(|x| next[x] - prev[x]));
        xs.push(next);
    }
    let states = xs.into_iter().map(SimplexState::from_array_unchecked).collect();
    Trajectory::new(dt, states)
}

/// Solves x = H + h F(x) by Gauss–Seidel sweeps, each compartment taking
/// its own loss term implicitly so iterates stay non-negative.
fn fixed_point(hist: &Vec5, start: Vec5, h: f64, p: &EpidemicParams, cfg: &SolverConfig, step: usize) -> Result<Vec5> {
    let mut x = start;
    for _ in 0..cfg.fixed_point_max_iter {
        let old = x;
        let living = 1.0 - x[4];
        if !(living >= MIN_LIVING) {
            return Err(Error::Singular(living));
        }
        let pressure = h * p.beta * x[2] / living;
        x[0] = hist[0] / (1.0 + pressure);
        x[1] = (hist[1] + pressure * x[0]) / (1.0 + h * p.sigma);
        x[2] = (hist[2] + h * p.sigma * x[1]) / (1.0 + h * (p.gamma_r + p.mu));
        x[3] = hist[3] + h * p.gamma_r * x[2];
        x[4] = hist[4] + h * p.mu * x[2];
        let change = (0..5).map(|k| (x[k] - old[k]).abs()).fold(0.0, f64::max);
        if !change.is_finite() {
            break;
        }
        if change <= cfg.fixed_point_tol {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence { step, iters: cfg.fixed_point_max_iter })
}

/// Classical fourth-order Runge–Kutta on the integer-order system; α is ignored.
pub fn simulate_classical_rk4(
    ic: &SimplexState,
    params: &EpidemicParams,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    let ic = ic.validated()?;
    if !(dt > 0.0) || n_steps == 0 {
        return Err(Error::Domain("rk4 needs dt > 0 and at least one step".into()));
    }
    let p = params.with_alpha(1.0);
    let axpy = |x: &Vec5, a: f64, k: &Vec5| -> Vec5 { std::array::from_fn(|j| x[j] + a * k[j]) };
    let mut xs = vec![ic.to_array()];
    for _ in 0..n_steps {
        let x = *xs.last().unwrap();
        let k1 = rhs_vec(&x, &p)?;
        let k2 = rhs_vec(&axpy(&x, dt / 2.0, &k1), &p)?;
        let k3 = rhs_vec(&axpy(&x, dt / 2.0, &k2), &p)?;
        let k4 = rhs_vec(&axpy(&x, dt, &k3), &p)?;
        let next: Vec5 = std::array::from_fn(|j| x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        if 1.0 - next[4] < MIN_LIVING {
            return Err(Error::Singular(1.0 - next[4]));
        }
        xs.push(next);
    }
    Trajectory::new(dt, xs.into_iter().map(SimplexState::from_array_unchecked).collect())
}

/// Time and height of the infectious peak; ties go to the earliest node.
pub fn infectious_peak(traj: &Trajectory) -> (f64, f64) {
    let mut best = 0;
    for (j, st) in traj.states.iter().enumerate() {
        if st.i > traj.states[best].i {
            best = j;
        }
    }
    (traj.time(best), traj.states[best].i)
}

pub fn peak_time(traj: &Trajectory) -> f64 {
    infectious_peak(traj).0
}

/// ‖a − b‖₂ / ‖b‖₂ over all nodes and compartments.
pub fn relative_l2(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!("trajectory lengths {} and {}", a.len(), b.len())));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.states.iter().zip(&b.states) {
        for (u, v) in x.to_array().iter().zip(y.to_array()) {
            num += (u - v) * (u - v);
            den += v * v;
        }
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mpox(alpha: f64) -> EpidemicParams {
        EpidemicParams::new(0.25, 0.13, 0.052, 0.005, alpha).unwrap()
    }

    fn ic() -> SimplexState {
        SimplexState::new(0.99, 0.005, 0.005, 0.0, 0.0).unwrap()
    }

    #[test]
    fn disease_free_is_stationary() {
        let free = SimplexState::new(0.9, 0.0, 0.0, 0.07, 0.03).unwrap();
        for cfg in [SolverConfig::default(), SolverConfig::explicit()] {
            let tr = simulate(&free, &mpox(0.8), 0.5, 100, &cfg).unwrap();
            assert!(tr.states().iter().all(|s| *s == free));
        }
        let tr = simulate_classical_rk4(&free, &mpox(1.0), 0.5, 100).unwrap();
        assert!(tr.states().iter().all(|s| *s == free));
    }

    #[test]
    fn conserves_population() {
        for cfg in [SolverConfig::default(), SolverConfig::explicit()] {
            let tr = simulate(&ic(), &mpox(0.85), 0.5, 600, &cfg).unwrap();
            assert_eq!(tr.states()[0], ic());
            for s in tr.states() {
                assert!((s.sum() - 1.0).abs() < 1e-12);
            }
        }
        let tr = simulate_classical_rk4(&ic(), &mpox(1.0), 0.5, 600).unwrap();
        assert!(tr.states().iter().all(|s| (s.sum() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn monotone_compartments_at_integer_order() {
        let tr = simulate(&ic(), &mpox(1.0), 0.5, 600, &SolverConfig::default()).unwrap();
        for w in tr.states().windows(2) {
            assert!(w[1].s <= w[0].s + 1e-15);
            assert!(w[1].r >= w[0].r - 1e-15);
            assert!(w[1].d >= w[0].d - 1e-15);
        }
    }

    #[test]
    fn sign_definite_rows_bound_by_initial_value() {
        // memory lets s rebound late in the outbreak, but never above s(0)
        let x0 = ic();
        let tr = simulate(&x0, &mpox(0.9), 0.5, 600, &SolverConfig::default()).unwrap();
        let s: Vec<f64> = tr.states().iter().map(|x| x.s).collect();
        assert!(s.windows(2).any(|w| w[1] > w[0]));
        for x in tr.states() {
            assert!(x.s <= x0.s + 1e-15);
            assert!(x.r >= x0.r - 1e-15);
            assert!(x.d >= x0.d - 1e-15);
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let p = mpox(1.0);
        let t_end = 100.0;
        let reference = simulate_classical_rk4(&ic(), &p, 0.05, 2000).unwrap();
        let i_end = reference.states().last().unwrap().i;
        let err = |dt: f64| {
            let n = (t_end / dt).round() as usize;
            let tr = simulate_classical_rk4(&ic(), &p, dt, n).unwrap();
            (tr.states().last().unwrap().i - i_end).abs()
        };
        let ratio = err(1.0) / err(0.5);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn alpha_one_close_to_rk4() {
        let p = mpox(1.0);
        let l1 = simulate(&ic(), &p, 0.05, 6000, &SolverConfig::default()).unwrap();
        let rk = simulate_classical_rk4(&ic(), &p, 0.01, 30000).unwrap().subsample(5);
        assert!(relative_l2(&l1, &rk).unwrap() < 1e-3);
    }

    #[test]
    fn implicit_and_explicit_agree_to_first_order() {
        for dt in [0.1, 0.05] {
            let n = (100.0 / dt) as usize;
            let a = simulate(&ic(), &mpox(0.9), dt, n, &SolverConfig::default()).unwrap();
            let b = simulate(&ic(), &mpox(0.9), dt, n, &SolverConfig::explicit()).unwrap();
            assert!(relative_l2(&b, &a).unwrap() < 5.0 * dt);
        }
    }

    #[test]
    fn grid_refinement_shrinks_change() {
        let alpha = 0.8;
        let run = |dt: f64| simulate(&ic(), &mpox(alpha), dt, (60.0 / dt) as usize, &SolverConfig::default()).unwrap();
        let coarse = run(0.4);
        let mid = run(0.2);
        let fine = run(0.1);
        let d1 = relative_l2(&coarse, &mid.subsample(2)).unwrap();
        let d2 = relative_l2(&mid, &fine.subsample(2)).unwrap();
        // first order at worst; the scheme is O(dt^{2-α}) in the smooth regime
        assert!(d2 < d1 / 1.8, "{d1} -> {d2}");
    }

    #[test]
    fn peak_time_rules() {
        let mk = |is: &[f64]| {
            let states = is.iter().map(|&i| SimplexState::new(1.0 - i, 0.0, i, 0.0, 0.0).unwrap()).collect();
            Trajectory::new(0.5, states).unwrap()
        };
        assert_eq!(peak_time(&mk(&[0.3, 0.2, 0.1, 0.05])), 0.0);
        assert_eq!(peak_time(&mk(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.5, 0.1])), 3.5);
        assert_eq!(peak_time(&mk(&[0.1, 0.4, 0.4, 0.2])), 0.5);
    }

    #[test]
    fn memory_delays_and_flattens_peak() {
        let run = |a: f64| simulate(&ic(), &mpox(a), 0.5, 600, &SolverConfig::default()).unwrap();
        let peaks: Vec<(f64, f64)> = [1.0, 0.95, 0.9].iter().map(|&a| infectious_peak(&run(a))).collect();
        for w in peaks.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn csv_layout() {
        let tr = simulate(&ic(), &mpox(0.9), 0.5, 4, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,s,e,i,r,d");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0.0000000000000000e0,9.8999999999999999e-1"));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(simulate(&ic(), &mpox(0.9), 0.0, 10, &SolverConfig::default()).is_err());
        assert!(simulate(&ic(), &mpox(0.9), 0.5, 0, &SolverConfig::default()).is_err());
        let cfg = SolverConfig { fixed_point_max_iter: 1, ..Default::default() };
        assert!(matches!(simulate(&ic(), &mpox(0.9), 0.5, 10, &cfg), Err(Error::NonConvergence { step: 1, .. })));
    }
}
