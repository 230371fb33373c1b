//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig { c1: 1e-4, c2: 0.9, max_evals: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub line_search: LineSearchConfig,
    /// Stop once the max-norm of the gradient falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { memory: 10, max_iters: 500, line_search: LineSearchConfig::default(), grad_tol: 1e-12 }
    }
}

impl LbfgsConfig {
    pub fn validated(self) -> Result<Self> {
        let ls = self.line_search;
        if self.memory == 0 {
            return Err(Error::Config("lbfgs memory must be positive".into()));
        }
        if !(0.0 < ls.c1 && ls.c1 < ls.c2 && ls.c2 < 1.0) || ls.max_evals == 0 {
            return Err(Error::Config("line search needs 0 < c1 < c2 < 1 and max_evals > 0".into()));
        }
        Ok(self)
    }
}

/// Objective value, gradient, and whatever the caller wants to keep.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: f64,
    pub grad: Vec<f64>,
    pub extra: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    MaxIters,
    Converged,
    /// The callback asked to stop.
    Stopped,
    /// No acceptable step was found; the best point so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome<T> {
    pub x: Vec<f64>,
    pub best: Evaluation<T>,
    pub iters: usize,
    pub evals: usize,
    pub status: LbfgsStatus,
    /// Objective value after each accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point<T> {
    step: f64,
    x: Vec<f64>,
    eval: Evaluation<T>,
    slope: f64,
}

/// Minimizes `objective` from `x0`.
pub fn lbfgs_optimize<F>(objective: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome<()>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut objective = objective;
    lbfgs_minimize(|x| objective(x).map(|(value, grad)| Evaluation { value, grad, extra: () }), x0, cfg, |_, _| true)
}

/// Minimizes `objective`; `on_accept(iter, eval)` runs after every accepted
/// step and may return `false` to stop.
pub fn lbfgs_minimize<T, F, C>(
    mut objective: F,
    x0: &[f64],
    cfg: &LbfgsConfig,
    mut on_accept: C,
) -> Result<LbfgsOutcome<T>>
where
    T: Clone,
    F: FnMut(&[f64]) -> Result<Evaluation<T>>,
    C: FnMut(usize, &Evaluation<T>) -> bool,
{
    let cfg = cfg.validated()?;
    let mut x = x0.to_vec();
    let mut cur = objective(&x)?;
    let mut evals = 1;
    if !cur.value.is_finite() || cur.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { iter: 0, term: "lbfgs initial point".into() });
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut history = Vec::new();
    let mut status = LbfgsStatus::MaxIters;
    let mut iters = 0;

    while iters < cfg.max_iters {
        if cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < cfg.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut dir = two_loop(&cur.grad, &pairs);
        let mut slope = dot(&dir, &cur.grad);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            pairs.clear();
            dir = cur.grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &cur.grad);
        }
        let first_step = if pairs.is_empty() { (1.0 / dot(&cur.grad, &cur.grad).sqrt()).min(1.0) } else { 1.0 };
        let found = strong_wolfe(&mut objective, &x, &cur, &dir, slope, first_step, &cfg.line_search, &mut evals)?;
        let Some(next) = found else {
            status = LbfgsStatus::LineSearchFailed;
            log::warn!("lbfgs: line search failed at iteration {iters}; keeping best point");
            break;
        };
        let s: Vec<f64> = next.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.eval.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let improvement = cur.value - next.eval.value;
        x = next.x;
        cur = next.eval;
        iters += 1;
        history.push(cur.value);
        if !on_accept(iters, &cur) {
            status = LbfgsStatus::Stopped;
            break;
        }
        if improvement <= 0.0 {
            status = LbfgsStatus::Converged;
            break;
        }
    }
    Ok(LbfgsOutcome { x, best: cur, iters, evals, status, history })
}

fn two_loop(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Strong-Wolfe line search; returns None if no step meeting both
/// conditions (or at least sufficient decrease) was found in budget.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<T, F>(
    objective: &mut F,
    x: &[f64],
    start: &Evaluation<T>,
    dir: &[f64],
    slope0: f64,
    first_step: f64,
    cfg: &LineSearchConfig,
    evals: &mut usize,
) -> Result<Option<Point<T>>>
where
    T: Clone,
    F: FnMut(&[f64]) -> Result<Evaluation<T>>,
{
    let f0 = start.value;
    let mut budget = cfg.max_evals;
    let mut probe = |step: f64, evals: &mut usize| -> Result<Option<Point<T>>> {
        let xs: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        let eval = objective(&xs)?;
        *evals += 1;
        if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Ok(None);
        }
        let slope = dot(&eval.grad, dir);
        Ok(Some(Point { step, x: xs, eval, slope }))
    };
    let armijo = |p: &Point<T>| p.eval.value <= f0 + cfg.c1 * p.step * slope0;
    let curvature = |p: &Point<T>| p.slope.abs() <= -cfg.c2 * slope0;

    let mut best: Option<Point<T>> = None;
    let keep_best = |best: &mut Option<Point<T>>, p: &Point<T>| {
        if p.eval.value < f0 + cfg.c1 * p.step * slope0 && best.as_ref().is_none_or(|b| p.eval.value < b.eval.value) {
            *best = Some(Point { step: p.step, x: p.x.clone(), eval: p.eval.clone(), slope: p.slope });
        }
    };

    let mut prev = Point { step: 0.0, x: x.to_vec(), eval: start.clone(), slope: slope0 };
    let mut step = first_step;
    let mut first = true;
    // bracketing phase
    let (mut lo, mut hi) = loop {
        if budget == 0 {
            return Ok(best);
        }
        budget -= 1;
        let Some(p) = probe(step, evals)? else {
            // overflowed: shrink and retry
            step = 0.5 * (prev.step + step);
            continue;
        };
        keep_best(&mut best, &p);
        if !armijo(&p) || (!first && p.eval.value >= prev.eval.value) {
            break (prev, p);
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.slope >= 0.0 {
            break (p, prev);
        }
        first = false;
        step = p.step * 2.0;
        prev = p;
    };
    // zoom phase
    while budget > 0 {
        budget -= 1;
        let (a, b) = (lo.step, hi.step);
        let width = (b - a).abs();
        if width < 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let mut trial = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let margin = 0.1 * width;
        if !(trial > left + margin && trial < right - margin) {
            trial = 0.5 * (a + b);
        }
        let Some(p) = probe(trial, evals)? else {
            hi = Point { step: trial, x: Vec::new(), eval: hi.eval.clone(), slope: hi.slope };
            continue;
        };
        keep_best(&mut best, &p);
        if !armijo(&p) || p.eval.value >= lo.eval.value {
            hi = p;
        } else {
            if curvature(&p) {
                return Ok(Some(p));
            }
            if p.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    Ok(best)
}

/// Minimizer of the cubic matching values and slopes at both ends.
fn cubic_min<T>(a: &Point<T>, b: &Point<T>) -> Option<f64> {
    let (x1, f1, g1) = (a.step, a.eval.value, a.slope);
    let (x2, f2, g2) = (b.step, b.eval.value, b.slope);
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (x2 - x1).signum() * disc.sqrt();
    let t = x2 - (x2 - x1) * (g2 + d2 - d1) / (g2 - g1 + 2.0 * d2);
    t.is_finite().then_some(t)
}
