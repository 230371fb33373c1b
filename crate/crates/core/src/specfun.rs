//! Gamma, log-Gamma and digamma on the positive real axis.

use crate::error::{Error, Result};

/// A strictly positive, finite real number.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(PositiveReal(value))
        } else {
            Err(Error::Domain(format!("expected a positive finite real, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// ln Γ(x) for x ≥ 0.5 by the Lanczos series.
fn ln_gamma_lanczos(x: f64) -> f64 {
    let xm1 = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (xm1 + i as f64);
    }
    let t = xm1 + LANCZOS_G + 0.5;
    HALF_LN_2PI + (xm1 + 0.5) * t.ln() - t + series.ln()
}

/// ln Γ(x).
pub fn ln_gamma(x: PositiveReal) -> f64 {
    let x = x.get();
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the series on its accurate range.
        ln_gamma_lanczos(x + 1.0) - x.ln()
    } else {
        ln_gamma_lanczos(x)
    }
}

/// Γ(x), evaluated on log scale.
pub fn gamma(x: PositiveReal) -> f64 {
    ln_gamma(x).exp()
}

/// ψ(x) = Γ'(x) / Γ(x).
pub fn digamma(x: PositiveReal) -> f64 {
    let mut x = x.get();
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: B_2k / (2k x^2k) for k = 1..=8.
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2
                                                * (691.0 / 32_760.0
                                                    - inv2 * (1.0 / 12.0 - inv2 * 3_617.0 / 8_160.0)))))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Convenience wrappers for callers that have already validated their argument.
pub(crate) fn gamma_f(x: f64) -> Result<f64> {
    Ok(gamma(PositiveReal::new(x)?))
}

pub(crate) fn digamma_f(x: f64) -> Result<f64> {
    Ok(digamma(PositiveReal::new(x)?))
}
