//! Conjugate emission models.
//!
//! Every family is a linear-Gaussian regression `y_t = A x_t + e`,
//! `e ~ N(0, Σ)`, with a matrix-normal inverse-Wishart prior on (A, Σ):
//!
//! * `Gaussian`: x_t = 1, so A is the state mean and the prior is
//!   normal-inverse-Wishart with μ | Σ ~ N(m, Σ/κ₀).
//! * `Ar1`: x_t = y_{t−1}.
//! * `Ar1Affine`: x_t = (y_{t−1}, 1).
//!
//! Autoregressive families have no predecessor at t = 0; that observation is
//! scored under a broad shared anchor N(0, 100·(tr S₀/d)·I) and contributes
//! no sufficient statistics.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSequence;
use crate::error::{Error, Result};
use crate::kernels::{sample_matrix_normal_inverse_wishart, MniwParams};
use crate::linalg::{cholesky, cholesky_jittered, ln_det_chol, symmetrize, Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionFamily {
    Gaussian,
    Ar1,
    Ar1Affine,
}

impl EmissionFamily {
    pub fn regressor_dim(self, d: usize) -> usize {
        match self {
            EmissionFamily::Gaussian => 1,
            EmissionFamily::Ar1 => d,
            EmissionFamily::Ar1Affine => d + 1,
        }
    }

    pub fn is_autoregressive(self) -> bool {
        !matches!(self, EmissionFamily::Gaussian)
    }

    /// Regressor x_t, or `None` at the autoregressive anchor.
    pub fn regressor(self, obs: &ObservationSequence, t: usize) -> Option<Vector> {
        match self {
            EmissionFamily::Gaussian => Some(Vector::from_element(1, 1.0)),
            _ if t == 0 => None,
            EmissionFamily::Ar1 => Some(Vector::from_row_slice(obs.row(t - 1))),
            EmissionFamily::Ar1Affine => {
                let prev = obs.row(t - 1);
                Some(Vector::from_fn(prev.len() + 1, |i, _| prev.get(i).copied().unwrap_or(1.0)))
            }
        }
    }
}

/// Covariance of backward first differences with divisor T−1, jittered by
/// 1e−6·I when singular. The flag reports whether jitter was applied.
pub fn first_difference_covariance(obs: &ObservationSequence) -> Result<(Mat, bool)> {
    let t = obs.len();
    if t < 3 {
        return Err(Error::Data(format!("need at least 3 observations, got {t}")));
    }
    let d = obs.dim();
    let diffs: Vec<Vector> = (1..t)
        .map(|i| Vector::from_iterator(d, obs.row(i).iter().zip(obs.row(i - 1)).map(|(a, b)| a - b)))
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().fold(Vector::zeros(d), |acc, x| acc + x) / n;
    let mut cov = Mat::zeros(d, d);
    for x in &diffs {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov /= n;
    symmetrize(&mut cov);
    let singular = match cholesky(&cov) {
        None => true,
        Some(c) => {
            let l = c.l_dirty();
            let max = (0..d).map(|i| l[(i, i)]).fold(0.0, f64::max);
            (0..d).any(|i| l[(i, i)] <= 1e-7 * max.max(1e-300))
        }
    };
    if singular {
        cov += Mat::identity(d, d) * 1e-6;
    }
    Ok((cov, singular))
}

/// Default MNIW prior for AR(1) emissions: M = 0, V = I, n₀ = d + 2 and
/// S₀ = 0.4·Σ̄ with Σ̄ the covariance of first differences.
pub fn default_ar_prior(obs: &ObservationSequence) -> Result<MniwParams> {
    default_prior(EmissionFamily::Ar1, obs, DEFAULT_GAUSSIAN_KAPPA0)
}

pub const DEFAULT_S0_FACTOR: f64 = 0.4;
pub const DEFAULT_GAUSSIAN_KAPPA0: f64 = 0.05;

/// Default prior for any family. Gaussian emissions centre the mean prior on
/// the data mean with precision multiplier `kappa0`.
pub fn default_prior(family: EmissionFamily, obs: &ObservationSequence, kappa0: f64) -> Result<MniwParams> {
    let d = obs.dim();
    let p = family.regressor_dim(d);
    let (sigma_bar, _) = first_difference_covariance(obs)?;
    let (m, v) = match family {
        EmissionFamily::Gaussian => {
            if !(kappa0 > 0.0) {
                return Err(Error::Config(format!("kappa0 must be positive, got {kappa0}")));
            }
            let (mean, _) = obs.moments();
            (Mat::from_column_slice(d, 1, &mean), Mat::from_element(1, 1, 1.0 / kappa0))
        }
        _ => (Mat::zeros(d, p), Mat::identity(p, p)),
    };
    Ok(MniwParams {
        m,
        v,
        s0: sigma_bar * DEFAULT_S0_FACTOR,
        n0: d as f64 + 2.0,
    })
}

/// A validated prior with the quantities every posterior update reuses.
#[derive(Clone, Debug)]
pub struct EmissionPrior {
    family: EmissionFamily,
    params: MniwParams,
    v_inv: Mat,
    m_vinv: Mat,
    m_vinv_mt: Mat,
    anchor_var: f64,
}

impl EmissionPrior {
    pub fn new(family: EmissionFamily, params: MniwParams) -> Result<Self> {
        params.validate()?;
        let d = params.dim();
        let p = family.regressor_dim(d);
        if params.regressor_dim() != p {
            return Err(Error::input(format!(
                "{family:?} emissions need a {d}x{p} regression prior, got {}x{}",
                params.m.nrows(),
                params.m.ncols()
            )));
        }
        let v_inv = cholesky(&params.v)
            .ok_or_else(|| Error::input("MNIW column covariance V is not SPD"))?
            .inverse();
        let m_vinv = &params.m * &v_inv;
        let m_vinv_mt = &m_vinv * params.m.transpose();
        let anchor_var = 100.0 * params.s0.trace() / d as f64;
        Ok(Self {
            family,
            params,
            v_inv,
            m_vinv,
            m_vinv_mt,
            anchor_var,
        })
    }

    pub fn family(&self) -> EmissionFamily {
        self.family
    }

    pub fn params(&self) -> &MniwParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn regressor_dim(&self) -> usize {
        self.params.regressor_dim()
    }

    pub fn anchor_var(&self) -> f64 {
        self.anchor_var
    }

    /// ln N(y | 0, anchor_var·I) for the autoregressive first observation.
    pub fn anchor_log_likelihood(&self, y: &[f64]) -> f64 {
        let d = y.len() as f64;
        -0.5 * d * (2.0 * PI * self.anchor_var).ln() - 0.5 * y.iter().map(|v| v * v).sum::<f64>() / self.anchor_var
    }

    /// Posterior MNIW parameters given sufficient statistics.
    pub fn posterior(&self, s: &SuffStats) -> Result<Posterior> {
        let vn_inv = &self.v_inv + &s.sxx;
        let vn_chol = cholesky_jittered(&vn_inv, 1e-10, "posterior column precision")?;
        let mut vn = vn_chol.inverse();
        symmetrize(&mut vn);
        let mn = (&self.m_vinv + &s.syx) * &vn;
        let mut sn = &self.params.s0 + &s.syy + &self.m_vinv_mt - &mn * &vn_inv * mn.transpose();
        symmetrize(&mut sn);
        let sn_chol = cholesky_jittered(&sn, 1e-10, "posterior scale matrix")?;
        let sn = sn_chol.l() * sn_chol.l().transpose();
        let ln_det_sn = ln_det_chol(&sn_chol);
        Ok(Posterior {
            params: MniwParams {
                m: mn,
                v: vn,
                s0: sn,
                n0: self.params.n0 + s.count as f64,
            },
            sn_chol,
            ln_det_sn,
        })
    }
}

/// Accumulated regression statistics of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    pub count: u64,
    /// Σ y yᵀ (d×d).
    pub syy: Mat,
    /// Σ y xᵀ (d×p).
    pub syx: Mat,
    /// Σ x xᵀ (p×p).
    pub sxx: Mat,
}

impl SuffStats {
    pub fn zeros(d: usize, p: usize) -> Self {
        Self {
            count: 0,
            syy: Mat::zeros(d, d),
            syx: Mat::zeros(d, p),
            sxx: Mat::zeros(p, p),
        }
    }

    fn check(&self, y: &[f64], x: &Vector) -> Result<()> {
        if y.len() != self.syy.nrows() || x.len() != self.sxx.nrows() {
            return Err(Error::input(format!(
                "emission point has dims ({}, {}), expected ({}, {})",
                y.len(),
                x.len(),
                self.syy.nrows(),
                self.sxx.nrows()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, y: &[f64], x: &Vector) -> Result<()> {
        self.check(y, x)?;
        self.update(y, x, 1.0);
        self.count += 1;
        Ok(())
    }

    pub fn remove(&mut self, y: &[f64], x: &Vector) -> Result<()> {
        self.check(y, x)?;
        if self.count == 0 {
            return Err(Error::Internal("removing a point from an empty state".into()));
        }
        self.update(y, x, -1.0);
        self.count -= 1;
        if self.count == 0 {
            // Clear accumulated rounding so an empty state is exactly the prior.
            self.syy.fill(0.0);
            self.syx.fill(0.0);
            self.sxx.fill(0.0);
        }
        Ok(())
    }

    fn update(&mut self, y: &[f64], x: &Vector, sign: f64) {
        let (d, p) = (y.len(), x.len());
        for i in 0..d {
            for k in 0..d {
                self.syy[(i, k)] += sign * y[i] * y[k];
            }
            for k in 0..p {
                self.syx[(i, k)] += sign * y[i] * x[k];
            }
        }
        for i in 0..p {
            for k in 0..p {
                self.sxx[(i, k)] += sign * x[i] * x[k];
            }
        }
    }
}

/// Posterior MNIW parameters with a factorised scale for fast predictive
/// evaluation.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub params: MniwParams,
    sn_chol: Cholesky<f64, Dyn>,
    ln_det_sn: f64,
}

impl Posterior {
    /// Collapsed predictive ln p(y | x, data): multivariate t with
    /// ν = n − d + 1 degrees of freedom, location M x and scale
    /// S (1 + xᵀ V x) / ν.
    pub fn predictive_log_likelihood(&self, y: &[f64], x: &Vector) -> f64 {
        let d = y.len() as f64;
        let nu = self.params.n0 - d + 1.0;
        let c = 1.0 + (x.transpose() * &self.params.v * x)[(0, 0)];
        let loc = &self.params.m * x;
        let r = Vector::from_iterator(y.len(), y.iter().zip(loc.iter()).map(|(a, b)| a - b));
        let q = crate::linalg::mahalanobis_sq(&self.sn_chol, &r) / c;
        let ln_det = self.ln_det_sn + d * (c / nu).ln();
        libm::lgamma(0.5 * (nu + d)) - libm::lgamma(0.5 * nu) - 0.5 * d * (nu * PI).ln() - 0.5 * ln_det
            - 0.5 * (nu + d) * (q).ln_1p()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Theta> {
        let draw = sample_matrix_normal_inverse_wishart(&self.params, rng)?;
        Theta::new(draw.a, draw.sigma)
    }
}

/// Emission parameters (A, Σ) of one state with a cached whitening factor.
#[derive(Clone, Debug)]
pub struct Theta {
    a: Mat,
    sigma: Mat,
    /// Row-major inverse of the lower Cholesky factor of Σ.
    l_inv: Vec<f64>,
    ln_det: f64,
}

impl PartialEq for Theta {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.sigma == other.sigma
    }
}

impl Theta {
    pub fn new(a: Mat, sigma: Mat) -> Result<Self> {
        let d = sigma.nrows();
        if a.nrows() != d {
            return Err(Error::input("emission matrix rows must match Σ"));
        }
        let chol = cholesky(&sigma).ok_or_else(|| Error::Numerical("emission covariance is singular".into()))?;
        let l_inv_m = chol
            .l()
            .solve_lower_triangular(&Mat::identity(d, d))
            .ok_or_else(|| Error::Numerical("emission covariance is singular".into()))?;
        let l_inv = (0..d * d).map(|k| l_inv_m[(k / d, k % d)]).collect();
        Ok(Self {
            ln_det: ln_det_chol(&chol),
            a,
            sigma,
            l_inv,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    /// ln N(y | A x, Σ).
    pub fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        let d = y.len();
        let p = x.len();
        let mut r = [0.0f64; 16];
        let mut heap;
        let r: &mut [f64] = if d <= 16 {
            &mut r[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for i in 0..d {
            let mut mu = 0.0;
            for k in 0..p {
                mu += self.a[(i, k)] * x[k];
            }
            r[i] = y[i] - mu;
        }
        let mut q = 0.0;
        for i in 0..d {
            let mut z = 0.0;
            for k in 0..=i {
                z += self.l_inv[i * d + k] * r[k];
            }
            q += z * z;
        }
        -0.5 * (d as f64 * (2.0 * PI).ln() + self.ln_det + q)
    }

    /// Draw y ~ N(A x, Σ).
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.sigma.nrows();
        let l = cholesky(&self.sigma).expect("validated at construction").unpack();
        let z: Vec<f64> = (0..d).map(|_| crate::kernels::std_normal(rng)).collect();
        (0..d)
            .map(|i| {
                let mu: f64 = (0..x.len()).map(|k| self.a[(i, k)] * x[k]).sum();
                mu + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>()
            })
            .collect()
    }
}

/// Regressors and responses laid out for repeated likelihood evaluation.
#[derive(Clone, Debug)]
pub struct Design {
    family: EmissionFamily,
    d: usize,
    p: usize,
    y: Vec<f64>,
    x: Vec<Option<Vector>>,
}

impl Design {
    pub fn new(family: EmissionFamily, obs: &ObservationSequence) -> Self {
        Self {
            family,
            d: obs.dim(),
            p: family.regressor_dim(obs.dim()),
            y: obs.values().to_vec(),
            x: (0..obs.len()).map(|t| family.regressor(obs, t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn regressor_dim(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> EmissionFamily {
        self.family
    }

    pub fn y(&self, t: usize) -> &[f64] {
        &self.y[t * self.d..(t + 1) * self.d]
    }

    pub fn x(&self, t: usize) -> Option<&Vector> {
        self.x[t].as_ref()
    }
}

/// Per-state emission parameters and sufficient statistics.
#[derive(Clone, Debug)]
pub struct EmissionState {
    prior: EmissionPrior,
    stats: Vec<SuffStats>,
    theta: Vec<Theta>,
}

impl EmissionState {
    /// `n_states` states with θ drawn from the prior.
    pub fn from_prior<R: Rng + ?Sized>(prior: EmissionPrior, n_states: usize, rng: &mut R) -> Result<Self> {
        let empty = SuffStats::zeros(prior.dim(), prior.regressor_dim());
        let post = prior.posterior(&empty)?;
        let theta = (0..n_states).map(|_| post.sample(rng)).collect::<Result<_>>()?;
        Ok(Self {
            stats: vec![empty; n_states],
            prior,
            theta,
        })
    }

    pub fn with_theta(prior: EmissionPrior, theta: Vec<Theta>) -> Self {
        let empty = SuffStats::zeros(prior.dim(), prior.regressor_dim());
        Self {
            stats: vec![empty; theta.len()],
            prior,
            theta,
        }
    }

    pub fn prior(&self) -> &EmissionPrior {
        &self.prior
    }

    pub fn n_states(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self, j: usize) -> &Theta {
        &self.theta[j]
    }

    pub fn thetas(&self) -> &[Theta] {
        &self.theta
    }

    pub fn set_theta(&mut self, j: usize, theta: Theta) {
        self.theta[j] = theta;
    }

    pub fn stats(&self, j: usize) -> &SuffStats {
        &self.stats[j]
    }

    pub fn accumulate(&mut self, j: usize, design: &Design, t: usize) -> Result<()> {
        if let Some(x) = design.x(t) {
            self.stats[j].add(design.y(t), x)?;
        }
        Ok(())
    }

    pub fn remove(&mut self, j: usize, design: &Design, t: usize) -> Result<()> {
        if let Some(x) = design.x(t) {
            self.stats[j].remove(design.y(t), x)?;
        }
        Ok(())
    }

    /// Recompute all statistics from an assignment.
    pub fn rebuild_stats(&mut self, design: &Design, z: &[usize]) -> Result<()> {
        let empty = SuffStats::zeros(self.prior.dim(), self.prior.regressor_dim());
        self.stats = vec![empty; self.theta.len()];
        for (t, &j) in z.iter().enumerate() {
            self.accumulate(j, design, t)?;
        }
        Ok(())
    }

    pub fn posterior(&self, j: usize) -> Result<Posterior> {
        self.prior.posterior(&self.stats[j])
    }

    pub fn sample_theta<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> Result<()> {
        self.theta[j] = self.posterior(j)?.sample(rng)?;
        Ok(())
    }

    pub fn sample_all<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for j in 0..self.theta.len() {
            self.sample_theta(j, rng)?;
        }
        Ok(())
    }

    /// ln p(y_t | θ_j, y_{t−1}).
    pub fn log_likelihood(&self, j: usize, design: &Design, t: usize) -> f64 {
        match design.x(t) {
            Some(x) => self.theta[j].log_likelihood(design.y(t), x.as_slice()),
            None => self.prior.anchor_log_likelihood(design.y(t)),
        }
    }

    /// T×L matrix (row-major) of emission log-likelihoods.
    pub fn likelihood_matrix(&self, design: &Design) -> Vec<f64> {
        use rayon::prelude::*;
        let l = self.theta.len();
        let mut out = vec![0.0; design.len() * l];
        out.par_chunks_mut(l.max(1) * 256).enumerate().for_each(|(c, chunk)| {
            for (i, row) in chunk.chunks_mut(l.max(1)).enumerate() {
                let t = c * 256 + i;
                for (j, v) in row.iter_mut().enumerate() {
                    *v = self.log_likelihood(j, design, t);
                }
            }
        });
        out
    }

    /// Append a state with empty statistics and the given parameters.
    pub fn push_state(&mut self, theta: Theta) {
        self.stats.push(SuffStats::zeros(self.prior.dim(), self.prior.regressor_dim()));
        self.theta.push(theta);
    }

    /// Keep only the listed states, in order.
    pub fn retain_states(&mut self, keep: &[usize]) {
        self.stats = keep.iter().map(|&j| self.stats[j].clone()).collect();
        self.theta = keep.iter().map(|&j| self.theta[j].clone()).collect();
    }

    pub fn stats_mut(&mut self, j: usize) -> &mut SuffStats {
        &mut self.stats[j]
    }
}
