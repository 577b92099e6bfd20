//! Shared hierarchical Dirichlet process machinery: stick-breaking,
//! Chinese-restaurant-franchise table counts, conditional updates for the
//! global weights β and the base transition rows π̄, and hyperparameter
//! refreshes for α, γ and the self-persistence beta prior (ρ₁, ρ₂).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    log_sum_exp, sample_bernoulli, sample_beta, sample_dirichlet,
    sample_gamma, sample_ln_categorical,
};

/// Square matrix of nonnegative integer counts that can grow and shrink as
/// states appear and disappear.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    rows: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            rows: vec![vec![0; k]; k],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::input("count matrix must be square"));
        }
        Ok(Self { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, j: usize, k: usize) -> u64 {
        self.rows[j][k]
    }

    pub fn set(&mut self, j: usize, k: usize, v: u64) {
        self.rows[j][k] = v;
    }

    pub fn inc(&mut self, j: usize, k: usize) {
        self.rows[j][k] += 1;
    }

    /// Decrement, reporting underflow instead of wrapping.
    pub fn dec(&mut self, j: usize, k: usize) -> Result<()> {
        let c = &mut self.rows[j][k];
        if *c == 0 {
            return Err(Error::Internal(format!("transition count ({j},{k}) would go negative")));
        }
        *c -= 1;
        Ok(())
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.rows[j]
    }

    pub fn row_sum(&self, j: usize) -> u64 {
        self.rows[j].iter().sum()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.dim();
        (0..k).map(|c| self.rows.iter().map(|r| r[c]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    /// Append an empty state.
    pub fn grow(&mut self) {
        for r in &mut self.rows {
            r.push(0);
        }
        let k = self.rows.len() + 1;
        self.rows.push(vec![0; k]);
    }

    /// Keep only the listed states, in the given order.
    pub fn retain_states(&mut self, keep: &[usize]) {
        self.rows = keep
            .iter()
            .map(|&j| keep.iter().map(|&k| self.rows[j][k]).collect())
            .collect();
    }
}

/// Gamma(shape, rate) prior on a concentration parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_gamma(self.shape, self.rate, rng)
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Concentration and self-persistence hyperparameters of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub gamma: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Sticky mass κ of the plain sticky model; zero for every other variant.
    pub kappa_sticky: f64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.alpha, self.gamma, self.rho1, self.rho2]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.kappa_sticky >= 0.0
            && self.kappa_sticky.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid hyperparameters {self:?}")))
        }
    }
}

/// Truncated GEM(γ) draw: `n_sticks` weights plus the remainder mass.
pub fn stick_breaking<R: Rng + ?Sized>(gamma: f64, n_sticks: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::input(format!("stick-breaking concentration must be positive, got {gamma}")));
    }
    if n_sticks == 0 {
        return Err(Error::input("stick-breaking needs at least one stick"));
    }
    let mut out = Vec::with_capacity(n_sticks + 1);
    let mut rest = 1.0;
    for _ in 0..n_sticks {
        let v = sample_beta(1.0, gamma, rng)?;
        out.push(v * rest);
        rest *= 1.0 - v;
    }
    let used: f64 = out.iter().sum();
    out.push((1.0 - used).max(0.0));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|b| *b /= s);
    Ok(out)
}

/// Number of occupied tables after seating `customers` one at a time in a
/// restaurant whose dish has concentration `conc`: customer i (0-based)
/// opens a new table with probability conc / (i + conc).
pub fn sample_crf_tables<R: Rng + ?Sized>(customers: u64, conc: f64, rng: &mut R) -> u64 {
    if customers == 0 {
        return 0;
    }
    if conc <= 0.0 {
        // A zero-mass dish still needs one table to serve anyone.
        return 1;
    }
    let mut tables = 0;
    for i in 0..customers {
        if sample_bernoulli(conc / (i as f64 + conc), rng) {
            tables += 1;
        }
    }
    tables.max(1)
}

/// CRF table counts m[j][k] for transition counts n under DP(αβ) rows.
pub fn sample_table_counts<R: Rng + ?Sized>(
    n: &CountMatrix,
    alpha: f64,
    beta: &[f64],
    rng: &mut R,
) -> Result<CountMatrix> {
    sample_table_counts_sticky(n, alpha, 0.0, beta, rng)
}

/// Table counts with an extra self-transition mass κ on the diagonal
/// (rows distributed as DP(αβ + κδ_j)).
pub fn sample_table_counts_sticky<R: Rng + ?Sized>(
    n: &CountMatrix,
    alpha: f64,
    kappa: f64,
    beta: &[f64],
    rng: &mut R,
) -> Result<CountMatrix> {
    let k = n.dim();
    if beta.len() < k {
        return Err(Error::input(format!("β has {} entries for {k} states", beta.len())));
    }
    if !(alpha > 0.0) {
        return Err(Error::input("α must be positive"));
    }
    let mut m = CountMatrix::zeros(k);
    for j in 0..k {
        for c in 0..k {
            let conc = alpha * beta[c] + if j == c { kappa } else { 0.0 };
            m.set(j, c, sample_crf_tables(n.get(j, c), conc, rng));
        }
    }
    Ok(m)
}

/// Split diagonal tables of the sticky model into those created by the
/// self-transition mass (overrides) and those that sampled dish j from β.
/// Returns the corrected matrix m̄ and the total override count.
pub fn sticky_overrides<R: Rng + ?Sized>(
    m: &CountMatrix,
    rho: f64,
    beta: &[f64],
    rng: &mut R,
) -> (CountMatrix, u64) {
    let mut bar = m.clone();
    let mut total = 0;
    for j in 0..m.dim() {
        let mjj = m.get(j, j);
        if mjj == 0 {
            continue;
        }
        let p = rho / (rho + beta[j] * (1.0 - rho));
        let w = (0..mjj).filter(|_| sample_bernoulli(p, rng)).count() as u64;
        bar.set(j, j, mjj - w);
        total += w;
    }
    (bar, total)
}

/// β | m, γ ~ Dir(γ/L + m_{·1}, …, γ/L + m_{·L}) for the weak-limit model.
pub fn resample_beta_weaklimit<R: Rng + ?Sized>(m: &CountMatrix, gamma: f64, l: usize, rng: &mut R) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::input("weak-limit truncation L must be at least 1"));
    }
    if m.dim() != l {
        return Err(Error::input(format!("table counts are {}x{0}, expected {l}x{l}", m.dim())));
    }
    resample_beta_from_dish_counts(&m.col_sums(), gamma, rng)
}

/// Weak-limit β update from per-dish customer counts at the top level.
pub fn resample_beta_from_dish_counts<R: Rng + ?Sized>(dish_counts: &[u64], gamma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let l = dish_counts.len() as f64;
    let conc: Vec<f64> = dish_counts.iter().map(|&c| gamma / l + c as f64).collect();
    sample_dirichlet(&conc, rng)
}

/// (β₁, …, β_K, β_new) ~ Dir(m_{·1}, …, m_{·K}, γ) for the direct-assignment
/// representation.
pub fn resample_beta_direct<R: Rng + ?Sized>(m: &CountMatrix, gamma: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if m.dim() != k {
        return Err(Error::input(format!("table counts are {}x{0}, expected {k}x{k}", m.dim())));
    }
    resample_beta_direct_from_counts(&m.col_sums(), gamma, rng)
}

pub fn resample_beta_direct_from_counts<R: Rng + ?Sized>(dish_counts: &[u64], gamma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if let Some(j) = dish_counts.iter().position(|&c| c == 0) {
        return Err(Error::Internal(format!(
            "active state {j} has no tables; it should have been pruned"
        )));
    }
    let mut conc: Vec<f64> = dish_counts.iter().map(|&c| c as f64).collect();
    conc.push(gamma);
    sample_dirichlet(&conc, rng)
}

/// π̄_j ~ Dir(αβ + n_j) row by row, with optional sticky mass κ on the
/// diagonal.
pub fn resample_pi_bar<R: Rng + ?Sized>(
    n: &CountMatrix,
    alpha: f64,
    kappa: f64,
    beta: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let l = n.dim();
    if beta.len() != l {
        return Err(Error::input(format!("β has {} entries for {l} states", beta.len())));
    }
    (0..l)
        .map(|j| {
            let conc: Vec<f64> = (0..l)
                .map(|k| {
                    let base = alpha * beta[k] + if j == k { kappa } else { 0.0 };
                    (base + n.get(j, k) as f64).max(f64::MIN_POSITIVE)
                })
                .collect();
            sample_dirichlet(&conc, rng)
        })
        .collect()
}

/// Auxiliary-variable refresh of a DP concentration given restaurant sizes
/// (customers per restaurant) and the total number of tables across them.
/// Runs `iters` rounds of (w_j, s_j) | c followed by c | w, s. With no
/// customers at all the posterior equals the prior and a fresh prior draw
/// is returned.
pub fn resample_concentration<R: Rng + ?Sized>(
    current: f64,
    restaurant_sizes: &[u64],
    total_tables: u64,
    prior: GammaPrior,
    iters: usize,
    rng: &mut R,
) -> Result<f64> {
    if restaurant_sizes.iter().all(|&n| n == 0) {
        return prior.sample(rng);
    }
    let mut c = current;
    for _ in 0..iters.max(1) {
        let mut sum_log_w = 0.0;
        let mut sum_s = 0u64;
        for &n in restaurant_sizes.iter().filter(|&&n| n > 0) {
            let w = sample_beta(c + 1.0, n as f64, rng)?;
            sum_log_w += w.max(f64::MIN_POSITIVE).ln();
            if sample_bernoulli(n as f64 / (n as f64 + c), rng) {
                sum_s += 1;
            }
        }
        let shape = prior.shape + total_tables as f64 - sum_s as f64;
        let rate = prior.rate - sum_log_w;
        c = sample_gamma(shape, rate, rng)?;
    }
    Ok(c)
}

/// Sufficient counts for the α/γ refresh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConcentrationCounts {
    /// n_{j·}: customers (w = 0 transitions) in each restaurant.
    pub restaurant_sizes: Vec<u64>,
    /// m_{··}: tables over all restaurants.
    pub total_tables: u64,
    /// Top-level customer count seen by γ.
    pub top_customers: u64,
    /// Number of top-level tables (distinct dishes in the direct-assignment
    /// representation).
    pub dishes: u64,
}

/// Hyperpriors used by the α/γ refresh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcentrationPriors {
    pub alpha: GammaPrior,
    pub gamma: GammaPrior,
    pub iters: usize,
}

/// One Gibbs refresh of (α, γ) from their auxiliary-variable conditionals.
pub fn resample_alpha_gamma<R: Rng + ?Sized>(
    current: (f64, f64),
    counts: &ConcentrationCounts,
    priors: &ConcentrationPriors,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let alpha = resample_concentration(
        current.0,
        &counts.restaurant_sizes,
        counts.total_tables,
        priors.alpha,
        priors.iters,
        rng,
    )?;
    let gamma = resample_concentration(
        current.1,
        &[counts.top_customers],
        counts.dishes,
        priors.gamma,
        priors.iters,
        rng,
    )?;
    Ok((alpha, gamma))
}

/// Map (ρ₁, ρ₂) to (φ, η) = (ρ₁/(ρ₁+ρ₂), (ρ₁+ρ₂)^{-1/3}).
pub fn rho_to_phi_eta(rho1: f64, rho2: f64) -> (f64, f64) {
    let s = rho1 + rho2;
    (rho1 / s, s.powf(-1.0 / 3.0))
}

/// Inverse of [`rho_to_phi_eta`].
pub fn phi_eta_to_rho(phi: f64, eta: f64) -> (f64, f64) {
    let s = eta.powi(-3);
    (phi * s, (1.0 - phi) * s)
}

/// Data entering the (φ, η) grid posterior.
#[derive(Clone, Copy, Debug)]
pub enum RhoLikelihood<'a> {
    /// No states: the posterior is the uniform grid prior.
    Empty,
    /// Beta log-densities of sampled per-state persistence values,
    /// given as (ln κ, ln(1 − κ)) pairs.
    BetaDensities(&'a [(f64, f64)]),
    /// Beta-binomial marginal over per-state (sticks, switches) counts.
    BetaBinomial(&'a [(u64, u64)]),
}

/// Uniform grid over (φ, η) ∈ (0, 1) × (0, 2], evaluated at cell centres.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoGrid {
    pub phi: Vec<f64>,
    pub eta: Vec<f64>,
    cells: Vec<RhoCell>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct RhoCell {
    rho1: f64,
    rho2: f64,
    ln_beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoDraw {
    pub phi: f64,
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl RhoGrid {
    pub fn new(n_phi: usize, n_eta: usize) -> Self {
        let phi: Vec<f64> = (0..n_phi).map(|i| (i as f64 + 0.5) / n_phi as f64).collect();
        let eta: Vec<f64> = (0..n_eta).map(|i| 2.0 * (i as f64 + 0.5) / n_eta as f64).collect();
        let mut cells = Vec::with_capacity(n_phi * n_eta);
        for &p in &phi {
            for &e in &eta {
                let (rho1, rho2) = phi_eta_to_rho(p, e);
                cells.push(RhoCell {
                    rho1,
                    rho2,
                    ln_beta: ln_beta_fn(rho1, rho2),
                });
            }
        }
        Self { phi, eta, cells }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    fn log_likelihoods(&self, lik: RhoLikelihood<'_>) -> Vec<f64> {
        match lik {
            RhoLikelihood::Empty => vec![0.0; self.cells.len()],
            RhoLikelihood::BetaDensities(kappas) => {
                let n = kappas.len() as f64;
                let s1: f64 = kappas.iter().map(|k| k.0).sum();
                let s2: f64 = kappas.iter().map(|k| k.1).sum();
                self.cells
                    .iter()
                    .map(|c| (c.rho1 - 1.0) * s1 + (c.rho2 - 1.0) * s2 - n * c.ln_beta)
                    .collect()
            }
            RhoLikelihood::BetaBinomial(counts) => {
                let used: Vec<(f64, f64)> = counts
                    .iter()
                    .filter(|c| c.0 + c.1 > 0)
                    .map(|&(s, f)| (s as f64, f as f64))
                    .collect();
                self.cells
                    .iter()
                    .map(|c| {
                        used.iter()
                            .map(|&(s, f)| ln_beta_fn(c.rho1 + s, c.rho2 + f) - c.ln_beta)
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// Normalised posterior over cells, row-major in (φ, η).
    pub fn posterior(&self, lik: RhoLikelihood<'_>) -> Vec<f64> {
        let logp = self.log_likelihoods(lik);
        let z = log_sum_exp(&logp);
        logp.iter().map(|l| (l - z).exp()).collect()
    }

    fn draw_at(&self, idx: usize) -> RhoDraw {
        let c = self.cells[idx];
        RhoDraw {
            phi: self.phi[idx / self.eta.len()],
            eta: self.eta[idx % self.eta.len()],
            rho1: c.rho1,
            rho2: c.rho2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, lik: RhoLikelihood<'_>, rng: &mut R) -> Result<RhoDraw> {
        let idx = sample_ln_categorical(&self.log_likelihoods(lik), rng)?;
        Ok(self.draw_at(idx))
    }

    /// Draw from the uniform grid prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> RhoDraw {
        let n = self.cells.len();
        let idx = ((crate::kernels::uniform_open(rng) * n as f64) as usize).min(n - 1);
        self.draw_at(idx)
    }
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Grid posterior for the sticky model's ratio ρ = κ/(α+κ) given the
/// override count and the total table count (uniform prior on cell centres).
pub fn resample_sticky_ratio<R: Rng + ?Sized>(overrides: u64, tables: u64, cells: usize, rng: &mut R) -> Result<f64> {
    let grid: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) / cells as f64).collect();
    let lw: Vec<f64> = grid
        .iter()
        .map(|&r| overrides as f64 * r.ln() + (tables - overrides.min(tables)) as f64 * (-r).ln_1p())
        .collect();
    Ok(grid[sample_ln_categorical(&lw, rng)?])
}

/// Uniform draw from the sticky-ratio grid prior.
pub fn sample_sticky_ratio_prior<R: Rng + ?Sized>(cells: usize, rng: &mut R) -> f64 {
    let i = (crate::kernels::uniform_open(rng) * cells as f64) as usize;
    (i.min(cells - 1) as f64 + 0.5) / cells as f64
}
