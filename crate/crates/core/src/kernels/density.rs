use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, ln_det_chol, mahalanobis_sq, Mat, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_normal(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::input(format!("normal sd must be positive, got {sd}")));
    }
    let z = (x - mean) / sd;
    Ok(-0.5 * LN_2PI - sd.ln() - 0.5 * z * z)
}

/// Multivariate normal log-density evaluated through a Cholesky factor.
pub fn ln_mvn(x: &[f64], mean: &[f64], cov: &Mat) -> Result<f64> {
    let d = x.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::input("MVN dimensions disagree"));
    }
    let c = cholesky(cov).ok_or_else(|| Error::input("MVN covariance is not SPD"))?;
    let r = Vector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    Ok(-0.5 * (d as f64 * LN_2PI + ln_det_chol(&c) + mahalanobis_sq(&c, &r)))
}

/// Gamma(shape, rate) log-density.
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::input("gamma parameters must be positive"));
    }
    if x <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::input("beta parameters must be positive"));
    }
    if !(x > 0.0 && x < 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_beta_kernel(x.ln(), (-x).ln_1p(), a, b))
}

/// Beta log-density from precomputed `ln x` and `ln(1 − x)`.
pub(crate) fn ln_beta_kernel(ln_x: f64, ln_1mx: f64, a: f64, b: f64) -> f64 {
    libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + (a - 1.0) * ln_x + (b - 1.0) * ln_1mx
}

/// Log-probability of `index`; −∞ outside the support.
pub fn ln_categorical(probs: &[f64], index: usize) -> Result<f64> {
    let s: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::input("categorical probabilities must form a simplex"));
    }
    Ok(probs.get(index).map_or(f64::NEG_INFINITY, |p| p.ln()))
}

pub fn ln_dirichlet(x: &[f64], conc: &[f64]) -> Result<f64> {
    if x.len() != conc.len() || conc.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::input("invalid Dirichlet parameters"));
    }
    if x.iter().any(|v| !(*v > 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Ok(f64::NEG_INFINITY);
    }
    let a0: f64 = conc.iter().sum();
    Ok(libm::lgamma(a0)
        + x.iter()
            .zip(conc)
            .map(|(v, a)| (a - 1.0) * v.ln() - libm::lgamma(*a))
            .sum::<f64>())
}

fn ln_mv_gamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * PI.ln() + (0..d).map(|j| libm::lgamma(a - j as f64 / 2.0)).sum::<f64>()
}

/// Inverse-Wishart IW(scale, df) log-density.
pub fn ln_inverse_wishart(x: &Mat, scale: &Mat, df: f64) -> Result<f64> {
    let d = scale.nrows();
    if !(df > d as f64 - 1.0) {
        return Err(Error::input("inverse-Wishart df too small"));
    }
    let cs = cholesky(scale).ok_or_else(|| Error::input("inverse-Wishart scale is not SPD"))?;
    let Some(cx) = cholesky(x) else {
        return Ok(f64::NEG_INFINITY);
    };
    let tr = (cx.inverse() * scale).trace();
    Ok(0.5 * df * ln_det_chol(&cs)
        - 0.5 * df * d as f64 * std::f64::consts::LN_2
        - ln_mv_gamma(d, 0.5 * df)
        - 0.5 * (df + d as f64 + 1.0) * ln_det_chol(&cx)
        - 0.5 * tr)
}

/// A distribution family with its parameters.
#[derive(Clone, Debug)]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    MvNormal { mean: Vec<f64>, cov: Mat },
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Categorical { probs: Vec<f64> },
    Dirichlet { concentration: Vec<f64> },
    InverseWishart { scale: Mat, df: f64 },
}

/// A point in the support of some family.
#[derive(Clone, Copy, Debug)]
pub enum Point<'a> {
    Scalar(f64),
    Index(usize),
    Vector(&'a [f64]),
    Matrix(&'a Mat),
}

/// Natural-log density (or mass) of `family` at `x`.
pub fn log_density(family: &Family, x: Point<'_>) -> Result<f64> {
    match (family, x) {
        (Family::Normal { mean, sd }, Point::Scalar(v)) => ln_normal(v, *mean, *sd),
        (Family::MvNormal { mean, cov }, Point::Vector(v)) => ln_mvn(v, mean, cov),
        (Family::Gamma { shape, rate }, Point::Scalar(v)) => ln_gamma_pdf(v, *shape, *rate),
        (Family::Beta { a, b }, Point::Scalar(v)) => ln_beta_pdf(v, *a, *b),
        (Family::Categorical { probs }, Point::Index(i)) => ln_categorical(probs, i),
        (Family::Dirichlet { concentration }, Point::Vector(v)) => ln_dirichlet(v, concentration),
        (Family::InverseWishart { scale, df }, Point::Matrix(m)) => ln_inverse_wishart(m, scale, *df),
        (f, p) => Err(Error::input(format!("point {p:?} is not in the domain of {f:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn fixed_values() {
        let v = log_density(&Family::Normal { mean: 0.0, sd: 1.0 }, Point::Scalar(0.0)).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
        let v = log_density(&Family::Categorical { probs: vec![0.2, 0.8] }, Point::Index(1)).unwrap();
        assert!((v - 0.8f64.ln()).abs() < 1e-15);
        let v = log_density(&Family::Categorical { probs: vec![0.2, 0.8] }, Point::Index(5)).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        let cov = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 4.0]));
        let v = ln_mvn(&[0.0, 2.0], &[0.0, 0.0], &cov).unwrap();
        let expect = -(2.0 * PI).ln() - 0.5 * 4f64.ln() - 0.5;
        assert!((v - expect).abs() < 1e-12);
        assert!((v + 3.0304).abs() < 1e-3);
    }

    #[test]
    fn mvn_normalizes_by_quadrature() {
        // Separable diag(1, 4) density integrated over a 2-d box.
        let cov = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 4.0]));
        let inner = |x: f64| simpson(|y| ln_mvn(&[x, y], &[0.0, 0.0], &cov).unwrap().exp(), -20.0, 20.0, 400);
        let total = simpson(inner, -10.0, 10.0, 400);
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn scalar_families_integrate_to_one() {
        let cases: Vec<(Family, f64, f64)> = vec![
            (Family::Normal { mean: 1.0, sd: 2.0 }, -30.0, 30.0),
            (Family::Gamma { shape: 2.5, rate: 1.5 }, 1e-12, 60.0),
            (Family::Beta { a: 2.0, b: 3.0 }, 1e-12, 1.0 - 1e-12),
            (Family::MvNormal { mean: vec![0.5], cov: Mat::from_element(1, 1, 0.7) }, -20.0, 20.0),
        ];
        for (fam, a, b) in cases {
            let f = |x: f64| match &fam {
                Family::MvNormal { .. } => log_density(&fam, Point::Vector(&[x])).unwrap().exp(),
                _ => log_density(&fam, Point::Scalar(x)).unwrap().exp(),
            };
            let total = simpson(f, a, b, 20_000);
            assert!((total - 1.0).abs() < 1e-3, "{fam:?}: {total}");
        }
        // 1-d inverse Wishart is an inverse gamma with shape df/2, scale s/2.
        let s = Mat::from_element(1, 1, 2.0);
        let total = simpson(
            |x| {
                let m = Mat::from_element(1, 1, x);
                ln_inverse_wishart(&m, &s, 5.0).unwrap().exp()
            },
            1e-9,
            400.0,
            200_000,
        );
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn invalid_params_error() {
        assert!(ln_normal(0.0, 0.0, 0.0).is_err());
        assert!(ln_mvn(&[0.0], &[0.0], &Mat::from_element(1, 1, -1.0)).is_err());
        assert!(log_density(&Family::Beta { a: 1.0, b: 1.0 }, Point::Index(0)).is_err());
    }
}
