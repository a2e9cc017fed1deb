//! Scalar special functions: log-gamma, digamma, trigamma and their
//! multivariate forms.
//!
//! Everything is computed with asymptotic (Stirling-type) expansions after
//! an upward recurrence shift, except for log-gamma on `[0.5, 2.5]` where
//! the zeros at 1 and 2 call for a Taylor series around 2.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `zeta(k) - 1` for k = 2..=27.
const ZETA_MINUS_ONE: [f64; 26] = [
    0.644_934_066_848_226_4,
    0.202_056_903_159_594_3,
    0.082_323_233_711_138_19,
    0.036_927_755_143_369_93,
    0.017_343_061_984_449_14,
    0.008_349_277_381_922_827,
    0.004_077_356_197_944_339,
    0.002_008_392_826_082_214,
    0.000_994_575_127_818_085_3,
    0.000_494_188_604_119_464_6,
    0.000_246_086_553_308_048_3,
    0.000_122_713_347_578_489_1,
    6.124_813_505_870_483e-5,
    3.058_823_630_702_049e-5,
    1.528_225_940_865_187e-5,
    7.637_197_637_899_762e-6,
    3.817_293_264_999_840e-6,
    1.908_212_716_553_939e-6,
    9.539_620_338_727_961e-7,
    4.769_329_867_878_065e-7,
    2.384_505_027_277_330e-7,
    1.192_199_259_653_111e-7,
    5.960_818_905_125_948e-8,
    2.980_350_351_465_228e-8,
    1.490_155_482_836_504e-8,
    7.450_711_789_835_429e-9,
];

/// B_{2k} / (2k (2k - 1)) for the Stirling series of ln Γ.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_{2k} / (2k) for the asymptotic series of ψ.
const DIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// B_{2k} for the asymptotic series of ψ′.
const TRIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_positive(name: &str, a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} requires a finite positive argument, got {a}"
        )))
    }
}

/// Natural log of the gamma function for `a > 0`.
pub fn log_gamma(a: f64) -> Result<f64> {
    check_positive("log_gamma", a)?;
    Ok(ln_gamma_unchecked(a))
}

/// Digamma ψ(a) = d/da ln Γ(a) for `a > 0`.
pub fn digamma(a: f64) -> Result<f64> {
    check_positive("digamma", a)?;
    Ok(digamma_unchecked(a))
}

/// Trigamma ψ′(a) for `a > 0`.
pub fn trigamma(a: f64) -> Result<f64> {
    check_positive("trigamma", a)?;
    Ok(trigamma_unchecked(a))
}

/// ln Γ without the domain check; NaN for non-positive input.
pub(crate) fn ln_gamma_unchecked(a: f64) -> f64 {
    if !(a > 0.0) || !a.is_finite() {
        return f64::NAN;
    }
    if a == 1.0 || a == 2.0 {
        return 0.0;
    }
    if a < 0.5 {
        return ln_gamma_unchecked(a + 1.0) - a.ln();
    }
    if a < 1.5 {
        // ln Γ(a) = ln Γ(a + 1) - ln a, evaluated around 2 with z = a - 1.
        let z = a - 1.0;
        return ln_gamma_near_two(z) - z.ln_1p();
    }
    if a <= 2.5 {
        return ln_gamma_near_two(a - 2.0);
    }
    let mut x = a;
    let mut prod = 1.0;
    while x < 10.0 {
        prod *= x;
        x += 1.0;
    }
    stirling(x) - prod.ln()
}

/// ln Γ(2 + z) for |z| ≤ 0.5 via its Taylor series.
fn ln_gamma_near_two(z: f64) -> f64 {
    let mut sum = 0.0;
    let mut zk = -z;
    for (i, c) in ZETA_MINUS_ONE.iter().enumerate() {
        zk *= -z;
        // zk = (-z)^k with k = i + 2
        sum += c * zk / (i + 2) as f64;
    }
    (1.0 - EULER_GAMMA) * z + sum
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut p = inv;
    for c in STIRLING {
        series += c * p;
        p *= inv2;
    }
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

pub(crate) fn digamma_unchecked(a: f64) -> f64 {
    if !(a > 0.0) || !a.is_finite() {
        return f64::NAN;
    }
    let mut x = a;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut p = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_ASYMP {
        series += c * p;
        p *= inv2;
    }
    acc + x.ln() - 0.5 / x - series
}

pub(crate) fn trigamma_unchecked(a: f64) -> f64 {
    if !(a > 0.0) || !a.is_finite() {
        return f64::NAN;
    }
    let mut x = a;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut p = inv2 * inv;
    let mut series = 0.0;
    for c in TRIGAMMA_ASYMP {
        series += c * p;
        p *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

fn check_multivariate(name: &str, a: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain(format!("{name} requires K >= 1")));
    }
    let lower = (k as f64 - 1.0) / 2.0;
    if !a.is_finite() || a <= lower {
        return Err(Error::Domain(format!("{name} requires a > (K-1)/2 = {lower}, got {a}")));
    }
    Ok(())
}

/// ln Γ_K(a) = K(K-1)/4 ln π + Σ_{j=1..K} ln Γ(a + (1-j)/2).
pub fn log_multivariate_gamma(a: f64, k: usize) -> Result<f64> {
    check_multivariate("log_multivariate_gamma", a, k)?;
    Ok(ln_mvgamma_unchecked(a, k))
}

/// ψ_K(a) = Σ_{j=1..K} ψ(a + (1-j)/2).
pub fn multivariate_digamma(a: f64, k: usize) -> Result<f64> {
    check_multivariate("multivariate_digamma", a, k)?;
    Ok(mvdigamma_unchecked(a, k))
}

pub(crate) fn ln_mvgamma_unchecked(a: f64, k: usize) -> f64 {
    if k == 1 {
        return ln_gamma_unchecked(a);
    }
    let kf = k as f64;
    let mut s = kf * (kf - 1.0) / 4.0 * PI.ln();
    for j in 0..k {
        s += ln_gamma_unchecked(a - j as f64 / 2.0);
    }
    s
}

pub(crate) fn mvdigamma_unchecked(a: f64, k: usize) -> f64 {
    (0..k).map(|j| digamma_unchecked(a - j as f64 / 2.0)).sum()
}
