//! Seedable random kernels and log-densities for every distribution the
//! samplers draw from.
//!
//! All kernels are pure functions of their parameters and a caller-owned
//! random stream; none hold shared state.

mod basic;
mod density;
mod mniw;
mod polya_gamma;
mod rng;

pub use basic::{
    exponential, ln_gamma_draw, sample_bernoulli, sample_beta, sample_beta_logs, sample_categorical,
    sample_dirichlet, sample_gamma, sample_ln_categorical, std_normal, uniform_open,
};
pub use density::{
    ln_beta_pdf, ln_categorical, ln_dirichlet, ln_gamma_pdf, ln_inverse_wishart, ln_mvn,
    ln_normal, log_density, Family, Point,
};
pub use mniw::{MniwParams, sample_inverse_wishart, sample_matrix_normal, sample_matrix_normal_inverse_wishart, MniwDraw};
pub use polya_gamma::{
    pg_mean, pg_variance, polya_gamma_series_moments, sample_polya_gamma, sample_polya_gamma_series, PgDraw,
};
pub use rng::{RngState, RngStream};

/// Stable `log(sum(exp(xs)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable logistic function.
pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(v)` without overflow for large |v|.
pub fn ln_logistic(v: f64) -> f64 {
    if v >= 0.0 {
        -(-v).exp().ln_1p()
    } else {
        v - v.exp().ln_1p()
    }
}
