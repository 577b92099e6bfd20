//! Observation-dependent self-persistence.
//!
//! For the recurrent model each state carries a logistic regression
//! κ_{j,t+1} = σ(R_jᵀ u_t + r_j), where u_t is the regression input derived
//! from y_t. The intercept is folded into the weights through the augmented
//! input x̃_t = (u_t, 1). Pólya-Gamma auxiliaries η_{j,t} ~ PG(1, v_{j,t})
//! make the weights conditionally Gaussian.
//!
//! Indexing is 0-based: `kappa(j, 0)` is the per-state initial value and
//! `kappa(j, t)` for t ≥ 1 is σ(wᵀ x̃_{t−1}).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSequence;
use crate::error::{Error, Result};
use crate::kernels::{logistic, sample_beta, sample_polya_gamma, std_normal};
use crate::linalg::{cholesky, Mat, Vector};

/// Which transformation of y_t feeds the regression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionInput {
    #[default]
    Raw,
    /// Backward difference y_t − y_{t−1} (zero at t = 0).
    FirstDifference,
}

/// Augmented regression inputs x̃_t = (u_t, 1), t = 0..T−1, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionInputs {
    p: usize,
    x: Vec<f64>,
}

impl RegressionInputs {
    pub fn new(obs: &ObservationSequence, mode: RegressionInput, standardize: bool) -> Self {
        let d = obs.dim();
        let t_len = obs.len();
        let mut u: Vec<f64> = match mode {
            RegressionInput::Raw => obs.values().to_vec(),
            RegressionInput::FirstDifference => (0..t_len)
                .flat_map(|t| {
                    (0..d).map(move |i| if t == 0 { 0.0 } else { obs.row(t)[i] - obs.row(t - 1)[i] })
                })
                .collect(),
        };
        if standardize && t_len > 0 {
            let n = t_len as f64;
            for i in 0..d {
                let mean = (0..t_len).map(|t| u[t * d + i]).sum::<f64>() / n;
                let var = (0..t_len).map(|t| (u[t * d + i] - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                for t in 0..t_len {
                    u[t * d + i] = (u[t * d + i] - mean) / sd;
                }
            }
        }
        let p = d + 1;
        let mut x = Vec::with_capacity(t_len * p);
        for row in u.chunks_exact(d) {
            x.extend_from_slice(row);
            x.push(1.0);
        }
        Self { p, x }
    }

    pub fn from_rows(p: usize, x: Vec<f64>) -> Result<Self> {
        if p == 0 || x.len() % p != 0 {
            return Err(Error::input("regression inputs do not form rows"));
        }
        Ok(Self { p, x })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.x[t * self.p..(t + 1) * self.p]
    }

    /// Linear predictor wᵀ x̃_t.
    pub fn predictor(&self, w: &[f64], t: usize) -> f64 {
        self.row(t).iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// Per-state regression weights (R_j, r_j) stored as w_j = (R_j, r_j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub weights: Vec<Vec<f64>>,
    pub prior_var: f64,
}

impl RecurrenceParams {
    pub fn zeros(n_states: usize, p: usize, prior_var: f64) -> Self {
        Self {
            weights: vec![vec![0.0; p]; n_states],
            prior_var,
        }
    }

    pub fn from_prior<R: Rng + ?Sized>(n_states: usize, p: usize, prior_var: f64, rng: &mut R) -> Self {
        Self {
            weights: (0..n_states).map(|_| sample_weight_prior(p, prior_var, rng)).collect(),
            prior_var,
        }
    }

    pub fn n_states(&self) -> usize {
        self.weights.len()
    }

    /// R_j (everything except the intercept).
    pub fn slope(&self, j: usize) -> &[f64] {
        let w = &self.weights[j];
        &w[..w.len() - 1]
    }

    pub fn intercept(&self, j: usize) -> f64 {
        *self.weights[j].last().expect("weights include an intercept")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_var > 0.0) || !self.prior_var.is_finite() {
            return Err(Error::input(format!("recurrence prior variance must be positive, got {}", self.prior_var)));
        }
        if self.weights.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite recurrence weights"));
        }
        Ok(())
    }
}

pub fn sample_weight_prior<R: Rng + ?Sized>(p: usize, prior_var: f64, rng: &mut R) -> Vec<f64> {
    let sd = prior_var.sqrt();
    (0..p).map(|_| sd * std_normal(rng)).collect()
}

/// κ_{j,t} for all states and timesteps, row-major L×T.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaSchedule {
    t_len: usize,
    kappa: Vec<f64>,
}

impl KappaSchedule {
    pub fn n_states(&self) -> usize {
        if self.t_len == 0 {
            0
        } else {
            self.kappa.len() / self.t_len
        }
    }

    pub fn len(&self) -> usize {
        self.t_len
    }

    pub fn is_empty(&self) -> bool {
        self.t_len == 0
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.kappa[j * self.t_len + t]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.kappa[j * self.t_len..(j + 1) * self.t_len]
    }

    /// Schedule from explicit row-major L×T values.
    pub fn from_values(n_states: usize, t_len: usize, kappa: Vec<f64>) -> Result<Self> {
        if kappa.len() != n_states * t_len {
            return Err(Error::input("schedule values do not match L×T"));
        }
        if kappa.iter().any(|k| !(0.0..=1.0).contains(k)) {
            return Err(Error::input("persistence probabilities must lie in [0, 1]"));
        }
        Ok(Self { t_len, kappa })
    }

    /// Constant-in-time schedule (disentangled sticky model).
    pub fn constant(kappa: &[f64], t_len: usize) -> Self {
        Self {
            t_len,
            kappa: kappa.iter().flat_map(|&k| std::iter::repeat_n(k, t_len)).collect(),
        }
    }

    /// All-zero schedule (no stickiness).
    pub fn zeros(n_states: usize, t_len: usize) -> Self {
        Self {
            t_len,
            kappa: vec![0.0; n_states * t_len],
        }
    }
}

/// κ_{j,0} = kappa_initial[j]; κ_{j,t} = σ(w_jᵀ x̃_{t−1}) for t ≥ 1.
pub fn compute_kappa_schedule(params: &RecurrenceParams, inputs: &RegressionInputs, kappa_initial: &[f64]) -> KappaSchedule {
    let t_len = inputs.len();
    let l = params.n_states();
    let mut kappa = Vec::with_capacity(l * t_len);
    for (j, w) in params.weights.iter().enumerate() {
        if t_len == 0 {
            break;
        }
        kappa.push(kappa_initial[j]);
        for t in 1..t_len {
            kappa.push(clamp_unit(logistic(inputs.predictor(w, t - 1))));
        }
    }
    KappaSchedule { t_len, kappa }
}

/// Clamp a probability into the open unit interval.
pub fn clamp_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// κ_{j,0} ~ Beta(ρ₁ + sticks_j, ρ₂ + switches_j), one draw per state.
pub fn resample_kappa_initial<R: Rng + ?Sized>(
    stick_counts: &[(u64, u64)],
    rho1: f64,
    rho2: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    stick_counts
        .iter()
        .map(|&(s, f)| Ok(clamp_unit(sample_beta(rho1 + s as f64, rho2 + f as f64, rng)?)))
        .collect()
}

/// η_{j,t} ~ PG(1, v_{j,t}) auxiliaries, row-major L×(T−1).
#[derive(Clone, Debug, PartialEq)]
pub struct PgAuxiliaries {
    width: usize,
    eta: Vec<f64>,
}

impl PgAuxiliaries {
    /// Initialised at the PG(1, 0) mean.
    pub fn new(n_states: usize, t_len: usize) -> Self {
        let width = t_len.saturating_sub(1);
        Self {
            width,
            eta: vec![0.25; n_states * width],
        }
    }

    pub fn from_values(n_states: usize, t_len: usize, eta: Vec<f64>) -> Result<Self> {
        let width = t_len.saturating_sub(1);
        if eta.len() != n_states * width {
            return Err(Error::input("auxiliary array has the wrong length"));
        }
        Ok(Self { width, eta })
    }

    pub fn values(&self) -> &[f64] {
        &self.eta
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.eta[j * self.width + t]
    }

    pub fn set(&mut self, j: usize, t: usize, v: f64) {
        self.eta[j * self.width + t] = v;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_states(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.eta.len() / self.width
        }
    }

    pub fn push_state(&mut self) {
        self.eta.extend(std::iter::repeat_n(0.25, self.width));
    }

    pub fn retain_states(&mut self, keep: &[usize]) {
        let w = self.width;
        self.eta = keep.iter().flat_map(|&j| self.eta[j * w..(j + 1) * w].to_vec()).collect();
    }
}

/// Refresh every auxiliary η_{j,t}, t = 0..T−2.
pub fn resample_pg_auxiliaries<R: Rng + ?Sized>(
    params: &RecurrenceParams,
    inputs: &RegressionInputs,
    rng: &mut R,
) -> Result<PgAuxiliaries> {
    let mut aux = PgAuxiliaries::new(params.n_states(), inputs.len());
    for j in 0..params.n_states() {
        for t in 0..aux.width {
            let v = inputs.predictor(&params.weights[j], t);
            aux.set(j, t, sample_polya_gamma(v, rng)?.omega);
        }
    }
    Ok(aux)
}

/// Refresh only the auxiliaries that enter some state's regression
/// likelihood: η_{z_t, t} for t = 0..T−2.
pub fn resample_used_pg_auxiliaries<R: Rng + ?Sized>(
    aux: &mut PgAuxiliaries,
    params: &RecurrenceParams,
    inputs: &RegressionInputs,
    z: &[usize],
    rng: &mut R,
) -> Result<()> {
    for t in 0..aux.width {
        let j = z[t];
        let v = inputs.predictor(&params.weights[j], t);
        aux.set(j, t, sample_polya_gamma(v, rng)?.omega);
    }
    Ok(())
}

/// Gaussian conditional of w_j: precision Λ and mean Λ⁻¹ b with
/// Λ = I/prior_var + Σ η x̃ x̃ᵀ, b = Σ (w_{t+1} − ½) x̃ over t ≤ T−2 with
/// z_t = j.
#[derive(Clone, Debug)]
pub struct RegressionPosterior {
    pub precision: Mat,
    pub rhs: Vector,
}

impl RegressionPosterior {
    pub fn mean(&self) -> Result<Vector> {
        let c = cholesky(&self.precision)
            .ok_or_else(|| Error::Internal("regression precision is not positive definite".into()))?;
        Ok(c.solve(&self.rhs))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let c = cholesky(&self.precision)
            .ok_or_else(|| Error::Internal("regression precision is not positive definite".into()))?;
        let mean = c.solve(&self.rhs);
        let p = mean.len();
        let eps = Vector::from_fn(p, |_, _| std_normal(rng));
        // x = μ + L⁻ᵀ ε has covariance (L Lᵀ)⁻¹.
        let dev = c
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .ok_or_else(|| Error::Internal("singular regression factor".into()))?;
        Ok((mean + dev).iter().copied().collect())
    }
}

pub fn regression_posterior(
    j: usize,
    inputs: &RegressionInputs,
    z: &[usize],
    w: &[bool],
    eta: &PgAuxiliaries,
    prior_var: f64,
) -> RegressionPosterior {
    let p = inputs.dim();
    let mut prec = Mat::identity(p, p) / prior_var;
    let mut rhs = Vector::zeros(p);
    for t in 0..z.len().saturating_sub(1) {
        if z[t] != j {
            continue;
        }
        let x = inputs.row(t);
        let e = eta.get(j, t);
        let lam = if w[t + 1] { 0.5 } else { -0.5 };
        for a in 0..p {
            rhs[a] += lam * x[a];
            for b in 0..p {
                prec[(a, b)] += e * x[a] * x[b];
            }
        }
    }
    RegressionPosterior { precision: prec, rhs }
}

/// Draw (R_j, r_j) from its PG-augmented Gaussian conditional.
pub fn resample_regression<R: Rng + ?Sized>(
    j: usize,
    inputs: &RegressionInputs,
    z: &[usize],
    w: &[bool],
    eta: &PgAuxiliaries,
    prior_var: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    regression_posterior(j, inputs, z, w, eta, prior_var).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;

    #[test]
    fn schedule_examples() {
        let obs = ObservationSequence::from_rows(&[vec![2.0, 7.0], vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let inputs = RegressionInputs::new(&obs, RegressionInput::Raw, false);
        let zero = RecurrenceParams::zeros(2, 3, 1e-4);
        let s = compute_kappa_schedule(&zero, &inputs, &[0.3, 0.6]);
        assert_eq!(s.get(0, 0), 0.3);
        assert_eq!(s.get(1, 0), 0.6);
        assert_eq!(s.get(1, 2), 0.5);
        let mut p = RecurrenceParams::zeros(1, 3, 1e-4);
        p.weights[0] = vec![1.0, 0.0, 0.0];
        let s = compute_kappa_schedule(&p, &inputs, &[0.5]);
        assert!((s.get(0, 1) - 0.880797077977882).abs() < 1e-12);
        p.weights[0] = vec![0.0, 0.0, 50.0];
        let s = compute_kappa_schedule(&p, &inputs, &[0.5]);
        assert_eq!(s.get(0, 1), 1.0 - f64::EPSILON / 2.0);
        assert!(s.get(0, 1) < 1.0);
    }

    #[test]
    fn first_difference_inputs() {
        let obs = ObservationSequence::from_rows(&[vec![1.0], vec![4.0], vec![2.0]]).unwrap();
        let inputs = RegressionInputs::new(&obs, RegressionInput::FirstDifference, false);
        assert_eq!(inputs.row(0), &[0.0, 1.0]);
        assert_eq!(inputs.row(1), &[3.0, 1.0]);
        assert_eq!(inputs.row(2), &[-2.0, 1.0]);
        let st = RegressionInputs::new(&obs, RegressionInput::Raw, true);
        let m: f64 = (0..3).map(|t| st.row(t)[0]).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn kappa_initial_examples() {
        let mut rng = RngStream::new(21, 0);
        let n = 100_000;
        let draws = resample_kappa_initial(&vec![(0, 0); n], 1.0, 1.0, &mut rng).unwrap();
        let m = draws.iter().sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.005);
        let draws = resample_kappa_initial(&vec![(100, 0); n], 1.0, 1.0, &mut rng).unwrap();
        let m = draws.iter().sum::<f64>() / n as f64;
        assert!((m - 101.0 / 102.0).abs() < 0.005);
        assert!(draws.iter().all(|&k| k > 0.0 && k < 1.0));
    }

    #[test]
    fn pg_auxiliaries_examples() {
        let mut rng = RngStream::new(22, 0);
        let obs = ObservationSequence::new(1, vec![0.0; 50_001]).unwrap();
        let inputs = RegressionInputs::new(&obs, RegressionInput::Raw, false);
        let zero = RecurrenceParams::zeros(2, 2, 1.0);
        let aux = resample_pg_auxiliaries(&zero, &inputs, &mut rng).unwrap();
        let n = 2.0 * aux.width() as f64;
        let mean = (0..2).flat_map(|j| (0..aux.width()).map(move |t| (j, t))).map(|(j, t)| aux.get(j, t)).sum::<f64>() / n;
        assert!((mean - 0.25).abs() < 0.002, "{mean}");
        let mut p = RecurrenceParams::zeros(2, 2, 1.0);
        p.weights[0] = vec![0.0, 1.0];
        p.weights[1] = vec![0.0, 5.0];
        let aux = resample_pg_auxiliaries(&p, &inputs, &mut rng).unwrap();
        let m = |j| (0..aux.width()).map(|t| aux.get(j, t)).sum::<f64>() / aux.width() as f64;
        assert!(m(1) < m(0));
        assert!((0..aux.width()).all(|t| aux.get(0, t) > 0.0 && aux.get(1, t) > 0.0));
    }

    #[test]
    fn unvisited_state_draws_from_prior() {
        let mut rng = RngStream::new(23, 0);
        let obs = ObservationSequence::new(1, vec![1.0, 2.0, 3.0]).unwrap();
        let inputs = RegressionInputs::new(&obs, RegressionInput::Raw, false);
        let aux = PgAuxiliaries::new(2, 3);
        let z = [0, 0, 0];
        let w = [false, true, true];
        let n = 100_000;
        let mut s = [0.0; 3];
        for _ in 0..n {
            let d = resample_regression(1, &inputs, &z, &w, &aux, 2.0, &mut rng).unwrap();
            s[0] += d[0] * d[0] / n as f64;
            s[1] += d[1] * d[1] / n as f64;
            s[2] += d[0] * d[1] / n as f64;
        }
        assert!((s[0] - 2.0).abs() < 0.1 && (s[1] - 2.0).abs() < 0.1 && s[2].abs() < 0.05, "{s:?}");
    }

    #[test]
    fn posterior_mean_matches_normal_equations() {
        let mut rng = RngStream::new(24, 0);
        let y: Vec<f64> = (0..40).map(|_| std_normal(&mut rng)).collect();
        let obs = ObservationSequence::new(1, y.clone()).unwrap();
        let inputs = RegressionInputs::new(&obs, RegressionInput::Raw, false);
        let z: Vec<usize> = (0..40).map(|t| t % 2).collect();
        let w: Vec<bool> = (0..40).map(|t| t % 3 == 0).collect();
        let params = RecurrenceParams::zeros(2, 2, 1.0);
        let aux = resample_pg_auxiliaries(&params, &inputs, &mut rng).unwrap();
        let post = regression_posterior(0, &inputs, &z, &w, &aux, 3.0);
        let mean = post.mean().unwrap();
        // Independent 2x2 solve by Cramer's rule.
        let (mut a, mut b, mut c, mut r0, mut r1) = (1.0 / 3.0, 0.0, 1.0 / 3.0, 0.0, 0.0);
        for t in 0..39 {
            if z[t] != 0 {
                continue;
            }
            let e = aux.get(0, t);
            let k = if w[t + 1] { 0.5 } else { -0.5 };
            a += e * y[t] * y[t];
            b += e * y[t];
            c += e;
            r0 += k * y[t];
            r1 += k;
        }
        let det = a * c - b * b;
        let m0 = (c * r0 - b * r1) / det;
        let m1 = (a * r1 - b * r0) / det;
        assert!((mean[0] - m0).abs() < 1e-8 && (mean[1] - m1).abs() < 1e-8);
    }
}
