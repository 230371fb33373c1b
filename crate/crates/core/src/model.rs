//! The normalized fractional SEIRD system and its parameter transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::Vec5;

pub const COMPARTMENTS: [&str; 5] = ["s", "e", "i", "r", "d"];

/// Smallest admissible living fraction 1 - d.
pub const MIN_LIVING: f64 = 1e-12;
/// Tolerance on the unit-sum invariant.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;
/// Tolerance on component non-negativity.
pub const NONNEG_TOL: f64 = 1e-12;

/// Population fractions (s, e, i, r, d) on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl SimplexState {
    pub fn new(s: f64, e: f64, i: f64, r: f64, d: f64) -> Result<Self> {
        SimplexState { s, e, i, r, d }.validated()
    }

    pub fn from_array(x: Vec5) -> Result<Self> {
        SimplexState::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub(crate) fn from_array_unchecked(x: Vec5) -> Self {
        SimplexState { s: x[0], e: x[1], i: x[2], r: x[3], d: x[4] }
    }

    pub fn validated(self) -> Result<Self> {
        let x = self.to_array();
        if x.iter().any(|v| !v.is_finite() || *v < -NONNEG_TOL) {
            return Err(Error::Domain(format!("state components must be non-negative: {x:?}")));
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::Domain(format!("state components sum to {sum}, expected 1")));
        }
        if 1.0 - self.d < MIN_LIVING {
            return Err(Error::Singular(1.0 - self.d));
        }
        Ok(self)
    }

    pub fn to_array(&self) -> Vec5 {
        [self.s, self.e, self.i, self.r, self.d]
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }
}

/// Constrained epidemiological parameters; rates are per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicParams {
    pub beta: f64,
    pub sigma: f64,
    pub gamma_r: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl EpidemicParams {
    pub fn new(beta: f64, sigma: f64, gamma_r: f64, mu: f64, alpha: f64) -> Result<Self> {
        EpidemicParams { beta, sigma, gamma_r, mu, alpha }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let rates = self.rates();
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Domain(format!("rates must be positive, got {rates:?}")));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!("memory order must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(self)
    }

    /// (β, σ, γ, μ)
    pub fn rates(&self) -> [f64; 4] {
        [self.beta, self.sigma, self.gamma_r, self.mu]
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Unconstrained optimizer coordinates for the five trainables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawParams {
    pub z_beta: f64,
    pub z_sigma: f64,
    pub z_gamma: f64,
    pub z_mu: f64,
    pub z_alpha: f64,
}

impl RawParams {
    pub fn from_array(z: [f64; 5]) -> Self {
        RawParams { z_beta: z[0], z_sigma: z[1], z_gamma: z[2], z_mu: z[3], z_alpha: z[4] }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.z_beta, self.z_sigma, self.z_gamma, self.z_mu, self.z_alpha]
    }
}

/// Admissible box for the trainables.
///
/// Each rate lives in (lower, upper]; the defaults give (0, ∞) for σ, γ, μ
/// and (0, beta_max] for β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamBounds {
    pub alpha_min: f64,
    pub beta_max: f64,
    /// Optional per-rate `[lower, upper]` in the order β, σ, γ, μ.
    pub rate_box: Option<[[f64; 2]; 4]>,
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds { alpha_min: 0.5, beta_max: 1.0, rate_box: None }
    }
}

impl ParamBounds {
    pub fn new(alpha_min: f64, beta_max: f64) -> Result<Self> {
        ParamBounds { alpha_min, beta_max, rate_box: None }.validated()
    }

    pub fn with_rate_box(mut self, rate_box: [[f64; 2]; 4]) -> Result<Self> {
        self.rate_box = Some(rate_box);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..1.0).contains(&self.alpha_min) {
            return Err(Error::Config(format!("alpha_min must lie in [0, 1), got {}", self.alpha_min)));
        }
        if !(self.beta_max > 0.0) {
            return Err(Error::Config(format!("beta_max must be positive, got {}", self.beta_max)));
        }
        if let Some(b) = self.rate_box {
            for (j, [lo, hi]) in b.iter().enumerate() {
                if !(*lo >= 0.0 && hi > lo) {
                    return Err(Error::Config(format!("rate box {j} is empty: [{lo}, {hi}]")));
                }
            }
            if b[0][0] >= self.beta_max {
                return Err(Error::Config("beta lower bound exceeds beta_max".into()));
            }
        }
        Ok(self)
    }

    /// (lower, width) of rate `j`; width may be infinite.
    pub fn rate_interval(&self, j: usize) -> (f64, f64) {
        let (lo, mut hi) = match self.rate_box {
            Some(b) => (b[j][0], b[j][1]),
            None => (0.0, f64::INFINITY),
        };
        if j == 0 {
            hi = hi.min(self.beta_max);
        }
        (lo, hi - lo)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Inverse of softplus for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Relative half-width of the quadratic blend in [`smooth_cap`].
const CAP_BLEND: f64 = 0.05;

/// C¹ saturation of `a` at `cap`: identity below cap − δ, constant above
/// cap + δ, quadratic in between. Returns (value, derivative).
fn smooth_cap(a: f64, cap: f64) -> (f64, f64) {
    if !cap.is_finite() {
        return (a, 1.0);
    }
    let delta = CAP_BLEND * cap;
    let knee = cap - delta;
    if a <= knee {
        (a, 1.0)
    } else if a >= cap + delta {
        (cap, 0.0)
    } else {
        let u = a - knee;
        (a - u * u / (4.0 * delta), 1.0 - u / (2.0 * delta))
    }
}

fn smooth_cap_inv(y: f64, cap: f64) -> Option<f64> {
    if !cap.is_finite() {
        return Some(y);
    }
    let delta = CAP_BLEND * cap;
    let knee = cap - delta;
    if y <= knee {
        Some(y)
    } else if y < cap {
        Some(knee + 2.0 * delta - 2.0 * (delta * (cap - y)).sqrt())
    } else {
        None
    }
}

/// Maps unconstrained coordinates onto the admissible box.
pub fn constrain(raw: &RawParams, bounds: &ParamBounds) -> EpidemicParams {
    let z = raw.to_array();
    let mut rates = [0.0; 4];
    for (j, rate) in rates.iter_mut().enumerate() {
        let (lo, width) = bounds.rate_interval(j);
        *rate = lo + smooth_cap(softplus(z[j]), width).0;
    }
    let alpha = bounds.alpha_min + (1.0 - bounds.alpha_min) * sigmoid(z[4]);
    EpidemicParams { beta: rates[0], sigma: rates[1], gamma_r: rates[2], mu: rates[3], alpha }
}

/// Diagonal of the Jacobian of [`constrain`].
pub fn constrain_grad(raw: &RawParams, bounds: &ParamBounds) -> [f64; 5] {
    let z = raw.to_array();
    let mut out = [0.0; 5];
    for j in 0..4 {
        let (_, width) = bounds.rate_interval(j);
        out[j] = smooth_cap(softplus(z[j]), width).1 * sigmoid(z[j]);
    }
    let sg = sigmoid(z[4]);
    out[4] = (1.0 - bounds.alpha_min) * sg * (1.0 - sg);
    out
}

/// Inverse of [`constrain`] for parameters strictly inside the bounds.
pub fn unconstrain(params: &EpidemicParams, bounds: &ParamBounds) -> Result<RawParams> {
    let rates = params.rates();
    let mut z = [0.0; 5];
    for j in 0..4 {
        let (lo, width) = bounds.rate_interval(j);
        let a = smooth_cap_inv(rates[j] - lo, width)
            .filter(|a| *a > 0.0)
            .ok_or_else(|| Error::Domain(format!("rate {j} = {} is outside its bounds", rates[j])))?;
        z[j] = softplus_inv(a);
    }
    let u = (params.alpha - bounds.alpha_min) / (1.0 - bounds.alpha_min);
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "alpha = {} must lie strictly inside ({}, 1)",
            params.alpha, bounds.alpha_min
        )));
    }
    z[4] = (u / (1.0 - u)).ln();
    Ok(RawParams::from_array(z))
}

/// Right-hand side on an arbitrary positive 5-vector.
pub fn rhs_vec(x: &Vec5, p: &EpidemicParams) -> Result<Vec5> {
    let [s, e, i, _r, d] = *x;
    let living = 1.0 - d;
    if !(living >= MIN_LIVING) {
        return Err(Error::Singular(living));
    }
    let inf = p.beta * s * i / living;
    Ok([-inf, inf - p.sigma * e, p.sigma * e - (p.gamma_r + p.mu) * i, p.gamma_r * i, p.mu * i])
}

/// F(x) of the normalized fractional SEIRD system.
pub fn rhs(state: &SimplexState, params: &EpidemicParams) -> Result<Vec5> {
    rhs_vec(&state.to_array(), params)
}

/// ∂F/∂x (5×5) and ∂F/∂(β, σ, γ, μ) (5×4), rows indexed by component of F.
pub fn rhs_jacobian_vec(x: &Vec5, p: &EpidemicParams) -> Result<([Vec5; 5], [[f64; 4]; 5])> {
    let [s, e, i, _r, d] = *x;
    let living = 1.0 - d;
    if !(living >= MIN_LIVING) {
        return Err(Error::Singular(living));
    }
    let b = p.beta;
    let di_ds = b * i / living;
    let di_di = b * s / living;
    let di_dd = b * s * i / (living * living);
    let di_db = s * i / living;
    let gm = p.gamma_r + p.mu;

    let js = [
        [-di_ds, 0.0, -di_di, 0.0, -di_dd],
        [di_ds, -p.sigma, di_di, 0.0, di_dd],
        [0.0, p.sigma, -gm, 0.0, 0.0],
        [0.0, 0.0, p.gamma_r, 0.0, 0.0],
        [0.0, 0.0, p.mu, 0.0, 0.0],
    ];
    let jp = [[-di_db, 0.0, 0.0, 0.0], [di_db, -e, 0.0, 0.0], [0.0, e, -i, -i], [0.0, 0.0, i, 0.0], [0.0, 0.0, 0.0, i]];
    Ok((js, jp))
}

pub fn rhs_jacobian(state: &SimplexState, params: &EpidemicParams) -> Result<([Vec5; 5], [[f64; 4]; 5])> {
    rhs_jacobian_vec(&state.to_array(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mpox() -> EpidemicParams {
        EpidemicParams::new(0.25, 0.13, 0.052, 0.005, 1.0).unwrap()
    }

    #[test]
    fn softplus_at_zero() {
        let p = constrain(&RawParams::default(), &ParamBounds::default());
        assert!((p.beta - std::f64::consts::LN_2).abs() < 1e-15);
        let tight = ParamBounds::new(0.5, 0.3).unwrap();
        assert!((constrain(&RawParams::default(), &tight).beta - 0.3).abs() < 1e-15);
    }

    #[test]
    fn alpha_map() {
        let b = ParamBounds::new(0.5, 1.0).unwrap();
        let mut raw = RawParams::default();
        assert!((constrain(&raw, &b).alpha - 0.75).abs() < 1e-15);
        raw.z_alpha = 50.0;
        assert!((constrain(&raw, &b).alpha - 1.0).abs() < 1e-15);
        raw.z_alpha = -50.0;
        assert!((constrain(&raw, &b).alpha - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constrain_grad_at_zero() {
        let g = constrain_grad(&RawParams::default(), &ParamBounds::default());
        assert_eq!(g[0], 0.5);
        assert_eq!(g[1], 0.5);
        assert_eq!(g[4], 0.125);
        let tight = ParamBounds::new(0.5, 0.3).unwrap();
        assert_eq!(constrain_grad(&RawParams::default(), &tight)[0], 0.0);
    }

    fn fd_constrain(raw: &RawParams, b: &ParamBounds, j: usize) -> f64 {
        let h = 1e-6;
        let mut up = raw.to_array();
        let mut dn = raw.to_array();
        up[j] += h;
        dn[j] -= h;
        let pu = constrain(&RawParams::from_array(up), b);
        let pd = constrain(&RawParams::from_array(dn), b);
        let val = |p: EpidemicParams| [p.beta, p.sigma, p.gamma_r, p.mu, p.alpha][j];
        (val(pu) - val(pd)) / (2.0 * h)
    }

    #[test]
    fn rhs_no_infection_pressure() {
        let x = SimplexState::new(0.95, 0.05, 0.0, 0.0, 0.0).unwrap();
        let p = EpidemicParams::new(0.3, 0.13, 0.05, 0.01, 1.0).unwrap();
        let f = rhs(&x, &p).unwrap();
        let want = [0.0, -0.0065, 0.0065, 0.0, 0.0];
        for k in 0..5 {
            assert!((f[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rhs_mpox_reference_point() {
        let x = SimplexState::new(0.9, 0.05, 0.04, 0.01, 0.0).unwrap();
        let f = rhs(&x, &mpox()).unwrap();
        let want = [-0.009, 0.0025, 0.00422, 0.00208, 0.0002];
        for k in 0..5 {
            assert!((f[k] - want[k]).abs() < 1e-15, "{k}: {}", f[k]);
        }
    }

    #[test]
    fn singular_state() {
        let x = [0.0, 0.0, 0.0, 0.0, 1.0];
        assert!(matches!(rhs_vec(&x, &mpox()), Err(Error::Singular(_))));
        assert!(SimplexState::new(0.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(SimplexState::new(0.5, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SimplexState::new(1.1, -0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn jacobian_structure() {
        let x = [0.7, 0.1, 0.1, 0.05, 0.05];
        let (js, _) = rhs_jacobian_vec(&x, &mpox()).unwrap();
        assert_eq!(js[0][3], 0.0);
        for c in 0..5 {
            let col: f64 = (0..5).map(|r| js[r][c]).sum();
            assert!(col.abs() < 1e-16);
        }
    }

    fn simplex_point() -> impl Strategy<Value = Vec5> {
        prop::array::uniform5(0.0f64..1.0).prop_filter_map("nonzero", |w| {
            let sum: f64 = w.iter().sum();
            // keep d away from 1
            let x = w.map(|v| v / sum);
            (sum > 1e-3 && x[4] < 0.95).then_some(x)
        })
    }

    fn params() -> impl Strategy<Value = EpidemicParams> {
        (0.05f64..0.5, 0.05f64..0.3, 0.02f64..0.1, 0.001f64..0.03, 0.3f64..=1.0)
            .prop_map(|(b, s, g, m, a)| EpidemicParams::new(b, s, g, m, a).unwrap())
    }

    proptest! {
        #[test]
        fn rhs_conserves(x in simplex_point(), p in params()) {
            let f = rhs_vec(&x, &p).unwrap();
            prop_assert!(f.iter().sum::<f64>().abs() < 1e-16);
        }

        #[test]
        fn rhs_points_inward(x in simplex_point(), p in params(), zero in 0usize..5) {
            let mut x = x;
            x[zero] = 0.0;
            let f = rhs_vec(&x, &p).unwrap();
            prop_assert!(f[zero] >= 0.0);
        }

        #[test]
        fn jacobian_matches_finite_differences(x in simplex_point(), p in params()) {
            let h = 1e-6;
            let (js, jp) = rhs_jacobian_vec(&x, &p).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-3);
            for c in 0..5 {
                let mut up = x; up[c] += h;
                let mut dn = x; dn[c] -= h;
                let fu = rhs_vec(&up, &p).unwrap();
                let fd = rhs_vec(&dn, &p).unwrap();
                for r in 0..5 {
                    let num = (fu[r] - fd[r]) / (2.0 * h);
                    prop_assert!(close(js[r][c], num), "state ({r},{c}) {} vs {num}", js[r][c]);
                }
            }
            for c in 0..4 {
                let mut rates = p.rates();
                rates[c] += h;
                let pu = EpidemicParams::new(rates[0], rates[1], rates[2], rates[3], p.alpha).unwrap();
                rates[c] -= 2.0 * h;
                let pd = EpidemicParams::new(rates[0], rates[1], rates[2], rates[3], p.alpha).unwrap();
                let fu = rhs_vec(&x, &pu).unwrap();
                let fd = rhs_vec(&x, &pd).unwrap();
                for r in 0..5 {
                    let num = (fu[r] - fd[r]) / (2.0 * h);
                    prop_assert!(close(jp[r][c], num), "rate ({r},{c})");
                }
            }
        }

        #[test]
        fn constrain_grad_matches_finite_differences(z in prop::array::uniform5(-6.0f64..6.0)) {
            let raw = RawParams::from_array(z);
            for b in [ParamBounds::default(),
                      ParamBounds::default().with_rate_box([[0.2, 0.4], [0.1, 0.3], [0.05, 0.1], [0.001, 0.01]]).unwrap()] {
                let g = constrain_grad(&raw, &b);
                for j in 0..5 {
                    let fd = fd_constrain(&raw, &b, j);
                    prop_assert!((g[j] - fd).abs() < 1e-8, "j={j}: {} vs {fd}", g[j]);
                }
            }
        }

        #[test]
        fn constrain_is_monotone_and_admissible(z in prop::array::uniform5(-20.0f64..20.0), j in 0usize..5, dz in 0.01f64..3.0) {
            let b = ParamBounds::default();
            let p = constrain(&RawParams::from_array(z), &b);
            prop_assert!(p.beta > 0.0 && p.beta <= b.beta_max);
            prop_assert!(p.sigma > 0.0 && p.gamma_r > 0.0 && p.mu > 0.0);
            prop_assert!(p.alpha > b.alpha_min && p.alpha <= 1.0);
            let mut z2 = z;
            z2[j] += dz;
            let q = constrain(&RawParams::from_array(z2), &b);
            let v = |p: EpidemicParams| [p.beta, p.sigma, p.gamma_r, p.mu, p.alpha][j];
            prop_assert!(v(q) >= v(p));
        }

        #[test]
        fn round_trip(b in 0.01f64..0.9, s in 0.01f64..2.0, g in 0.01f64..2.0, m in 0.001f64..1.0, a in 0.51f64..0.999) {
            let bounds = ParamBounds::default();
            let p = EpidemicParams::new(b, s, g, m, a).unwrap();
            let q = constrain(&unconstrain(&p, &bounds).unwrap(), &bounds);
            for (x, y) in [(p.beta, q.beta), (p.sigma, q.sigma), (p.gamma_r, q.gamma_r), (p.mu, q.mu), (p.alpha, q.alpha)] {
                prop_assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }

        #[test]
        fn round_trip_in_blend_region(b in 0.955f64..0.9999) {
            let bounds = ParamBounds::default();
            let p = EpidemicParams::new(b, 0.1, 0.1, 0.01, 0.9).unwrap();
            let q = constrain(&unconstrain(&p, &bounds).unwrap(), &bounds);
            prop_assert!((p.beta - q.beta).abs() < 1e-10);
        }
    }
}
