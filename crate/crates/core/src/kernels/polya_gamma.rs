//! Exact Pólya-Gamma PG(1, c) sampler.
//!
//! Devroye-style alternating-series accept/reject for J*(1, z) with
//! z = |c| / 2, then PG(1, c) = J*(1, z) / 4. The proposal mixes a truncated
//! exponential (right of `TRUNC`) with a truncated inverse Gaussian (left of
//! `TRUNC`); acceptance decisions use the alternating series of the J*
//! density, so the draws are exact. All transcendental calls go through
//! `libm` so accept/reject decisions are identical across platforms.

use std::f64::consts::PI;

use rand::Rng;

use super::basic::{exponential, std_normal, uniform_open};
use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;

/// One draw ω ~ PG(1, c) together with the tilt it was drawn at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgDraw {
    pub omega: f64,
    pub tilt: f64,
}

/// E[PG(1, c)] = tanh(c/2) / (2c), with the c → 0 limit 1/4.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (c / 2.0).tanh() / (2.0 * c)
    }
}

/// Var[PG(1, c)] = (sinh c − c) / (4 c³ cosh²(c/2)), limit 1/24 at c = 0.
pub fn pg_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        1.0 / 24.0 - c * c / 120.0
    } else {
        let ch = (c / 2.0).cosh();
        (c.sinh() - c) / (4.0 * c * c * c * ch * ch)
    }
}

/// Coefficient `a_n(x)` of the alternating series for the J*(1) density.
fn series_coef(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * libm::exp(-0.5 * k * k * x)
    } else if x > 0.0 {
        let half = n as f64 + 0.5;
        let e = -1.5 * (libm::log(0.5 * PI) + libm::log(x)) + libm::log(k) - 2.0 * half * half / x;
        libm::exp(e)
    } else {
        0.0
    }
}

/// ln Φ(x), accurate far into the lower tail.
fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        libm::log(0.5 * libm::erfc(-x / std::f64::consts::SQRT_2))
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        -0.5 * x2 - libm::log(-x) - 0.5 * libm::log(2.0 * PI)
            + libm::log(1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    }
}

/// Probability that the proposal comes from the exponential (right) piece.
fn right_mass(z: f64) -> f64 {
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let rt = (1.0 / TRUNC).sqrt();
    let b = rt * (TRUNC * z - 1.0);
    let a = -rt * (TRUNC * z + 1.0);
    let x0 = libm::log(fz) + fz * TRUNC;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let hi = xb.max(xa);
    let ln_q_over_p = libm::log(4.0 / PI) + hi + libm::log(libm::exp(xb - hi) + libm::exp(xa - hi));
    1.0 / (1.0 + libm::exp(ln_q_over_p))
}

/// Inverse Gaussian IG(1/z, 1) truncated to (0, TRUNC).
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = 1.0 / z;
    let mut x = TRUNC + 1.0;
    if mu > TRUNC {
        let mut alpha = 0.0;
        while uniform_open(rng) > alpha {
            let (mut e1, mut e2) = (exponential(rng), exponential(rng));
            while e1 * e1 > 2.0 * e2 / TRUNC {
                e1 = exponential(rng);
                e2 = exponential(rng);
            }
            let d = 1.0 + TRUNC * e1;
            x = TRUNC / (d * d);
            alpha = libm::exp(-0.5 * z * z * x);
        }
    } else {
        while x > TRUNC {
            let y = std_normal(rng);
            let y = y * y;
            let my = mu * y;
            x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
            if uniform_open(rng) > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
    }
    x
}

/// Exact draw from J*(1, z).
fn sample_jstar<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let p_right = right_mass(z);
    loop {
        let x = if uniform_open(rng) < p_right {
            TRUNC + exponential(rng) / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = uniform_open(rng) * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Draw ω ~ PG(1, c). The law depends on |c| only.
pub fn sample_polya_gamma<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<PgDraw> {
    if !c.is_finite() {
        return Err(Error::input(format!("Pólya-Gamma tilt must be finite, got {c}")));
    }
    let z = 0.5 * c.abs();
    let omega = 0.25 * sample_jstar(z, rng);
    Ok(PgDraw { omega, tilt: c })
}

/// Denominators (k − ½)² + c²/(4π²) of the infinite-convolution form
/// PG(1, c) = (1/(2π²)) Σ_k g_k / d_k with g_k ~ Exp(1).
fn series_denominators(c: f64, terms: usize) -> impl Iterator<Item = f64> {
    let tilt = c * c / (4.0 * PI * PI);
    (1..=terms).map(move |k| {
        let h = k as f64 - 0.5;
        h * h + tilt
    })
}

/// Draw from the sum truncated after `terms` terms. Reference oracle only.
pub fn sample_polya_gamma_series<R: Rng + ?Sized>(c: f64, terms: usize, rng: &mut R) -> f64 {
    series_denominators(c, terms).map(|d| exponential(rng) / d).sum::<f64>() / (2.0 * PI * PI)
}

/// Exact (mean, variance) of the truncated-sum oracle.
pub fn polya_gamma_series_moments(c: f64, terms: usize) -> (f64, f64) {
    let k = 1.0 / (2.0 * PI * PI);
    let (m, v) = series_denominators(c, terms).fold((0.0, 0.0), |(m, v), d| (m + 1.0 / d, v + 1.0 / (d * d)));
    (k * m, k * k * v)
}
