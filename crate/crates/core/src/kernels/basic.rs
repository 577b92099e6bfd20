use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Uniform draw on the open interval (0, 1).
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Exp(1) by inversion.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -uniform_open(rng).ln()
}

/// Log of a Gamma(shape, 1) draw. Stays finite for tiny shapes where the
/// draw itself would underflow to zero.
pub fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && shape.is_finite());
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape validated");
        g.sample(rng).max(f64::MIN_POSITIVE).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape validated");
        let x: f64 = g.sample(rng);
        (x.max(f64::MIN_POSITIVE).ln() + uniform_open(rng).ln() / shape).max(f64::MIN)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Gamma draw with shape/rate parametrisation (mean = shape / rate).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    Ok(ln_gamma_draw(shape, rng).exp() / rate)
}

/// Beta draw built from two log-gamma draws, so extreme shapes do not
/// collapse to 0/0.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_positive("beta a", a)?;
    check_positive("beta b", b)?;
    let la = ln_gamma_draw(a, rng);
    let lb = ln_gamma_draw(b, rng);
    let m = la.max(lb);
    let x = (la - m).exp() / ((la - m).exp() + (lb - m).exp());
    Ok(x)
}

/// Beta draw returned as (ln x, ln(1 − x)), both accurate even when x
/// rounds to 0 or 1 in floating point.
pub fn sample_beta_logs<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<(f64, f64)> {
    check_positive("beta a", a)?;
    check_positive("beta b", b)?;
    let la = ln_gamma_draw(a, rng);
    let lb = ln_gamma_draw(b, rng);
    let m = la.max(lb);
    let lse = m + ((la - m).exp() + (lb - m).exp()).ln();
    Ok((la - lse, lb - lse))
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    uniform_open(rng) < p
}

/// Index draw from unnormalised nonnegative weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::input(format!("categorical weight {i} is {w}")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("all categorical weights are zero".into()));
    }
    let u = uniform_open(rng) * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Index draw from log-weights (`-inf` entries are impossible).
pub fn sample_ln_categorical<R: Rng + ?Sized>(ln_weights: &[f64], rng: &mut R) -> Result<usize> {
    let m = ln_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Degenerate("all categorical log-weights are -inf".into()));
    }
    let w: Vec<f64> = ln_weights.iter().map(|&l| (l - m).exp()).collect();
    sample_categorical(&w, rng)
}

/// Dirichlet draw via normalised log-gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::input("dirichlet concentration is empty"));
    }
    for (i, &a) in concentration.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::input(format!("dirichlet concentration {i} is {a}")));
        }
    }
    let logs: Vec<f64> = concentration.iter().map(|&a| ln_gamma_draw(a, rng)).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    let s2: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s2);
    Ok(out)
}
