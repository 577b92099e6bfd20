//! Direct-assignment sweep.
//!
//! Transition rows and emission parameters are integrated out. Each
//! timestep draws (z_t, w_t, w_{t+1}) jointly given everything else, with
//! j = z_{t−1}, l = z_{t+1}, s the stick probabilities, and
//! a_j(k) = αβ_k + κδ_{jk}, A = α + κ (κ is the sticky mass, zero except for
//! the sticky variant):
//!
//! | w_t | w_{t+1} | k     | weight                                              |
//! |-----|---------|-------|-----------------------------------------------------|
//! | 1   | 1       | j = l | s_{j,t} s_{j,t+1}                                   |
//! | 0   | 1       | l     | (1 − s_{j,t}) p₁(l) s_{l,t+1}                       |
//! | 1   | 0       | j     | s_{j,t} (1 − s_{j,t+1}) (a_j(l) + n_{jl})/(A + n_{j·}) |
//! | 0   | 0       | any   | (1 − s_{j,t}) p₁(k) (1 − s_{k,t+1}) p₂(k, l)        |
//!
//! with p₁(k) = (a_j(k) + n_{jk})/(A + n_{j·}) and
//! p₂(k, l) = (a_k(l) + n_{kl} + δ_{jk}δ_{kl})/(A + n_{k·} + δ_{jk}),
//! counts excluding timestep t. Each weight is multiplied by the collapsed
//! predictive density of y_t. The first and last timesteps drop the missing
//! neighbour; z₀ is weighted by β.

use crate::emissions::{Posterior, SuffStats};
use crate::error::{Error, Result};
use crate::hdp::CountMatrix;
use crate::kernels::{logistic, sample_beta, sample_ln_categorical, RngStream};
use crate::recurrence::{clamp_unit, sample_weight_prior};

use super::blocks::{update_persistence, update_transitions};
use super::{transition_counts, ChainState, Model, ModelVariant, Prepared};

/// Inputs of the per-timestep case table.
#[derive(Clone, Copy, Debug)]
pub struct CaseContext<'a> {
    /// z_{t−1}, absent at t = 0.
    pub prev: Option<usize>,
    /// z_{t+1}, absent at t = T − 1.
    pub next: Option<usize>,
    /// Represented states K; index K is the new state.
    pub n_states: usize,
    /// β of length K + 1.
    pub beta: &'a [f64],
    pub alpha: f64,
    pub kappa_sticky: f64,
    /// Transition counts with timestep t removed.
    pub counts: &'a CountMatrix,
    /// s_{j,t} for j = z_{t−1}.
    pub stick_prev: f64,
    /// s_{k,t+1} for k = 0..=K.
    pub stick_next: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseOption {
    pub state: usize,
    pub w_t: bool,
    pub w_next: bool,
    pub weight: f64,
}

impl CaseContext<'_> {
    fn n(&self, j: usize, k: usize) -> f64 {
        if j < self.n_states && k < self.n_states {
            self.counts.get(j, k) as f64
        } else {
            0.0
        }
    }

    fn row(&self, j: usize) -> f64 {
        if j < self.n_states {
            self.counts.row_sum(j) as f64
        } else {
            0.0
        }
    }

    fn a(&self, j: usize, k: usize) -> f64 {
        self.alpha * self.beta[k] + if j == k { self.kappa_sticky } else { 0.0 }
    }

    /// Weight of one (k, w_t, w_{t+1}) option, zero when illegal.
    pub fn weight(&self, k: usize, w_t: bool, w_next: bool) -> f64 {
        let big_a = self.alpha + self.kappa_sticky;
        let p1 = |j: usize, k: usize| (self.a(j, k) + self.n(j, k)) / (big_a + self.row(j));
        let p2 = |j: usize, k: usize, l: usize| {
            let bump = if j == k { 1.0 } else { 0.0 };
            let same = if j == k && k == l { 1.0 } else { 0.0 };
            (self.a(k, l) + self.n(k, l) + same) / (big_a + self.row(k) + bump)
        };
        match (self.prev, self.next) {
            (None, None) => {
                if w_t || w_next {
                    0.0
                } else {
                    self.beta[k]
                }
            }
            (None, Some(l)) => match (w_t, w_next) {
                (true, _) => 0.0,
                (false, true) => {
                    if k == l {
                        self.beta[l] * self.stick_next[l]
                    } else {
                        0.0
                    }
                }
                (false, false) => {
                    self.beta[k] * (1.0 - self.stick_next[k]) * (self.a(k, l) + self.n(k, l)) / (big_a + self.row(k))
                }
            },
            (Some(j), None) => match (w_t, w_next) {
                (_, true) => 0.0,
                (true, false) => {
                    if k == j {
                        self.stick_prev
                    } else {
                        0.0
                    }
                }
                (false, false) => (1.0 - self.stick_prev) * p1(j, k),
            },
            (Some(j), Some(l)) => match (w_t, w_next) {
                (true, true) => {
                    if k == j && j == l {
                        self.stick_prev * self.stick_next[j]
                    } else {
                        0.0
                    }
                }
                (false, true) => {
                    if k == l {
                        (1.0 - self.stick_prev) * p1(j, l) * self.stick_next[l]
                    } else {
                        0.0
                    }
                }
                (true, false) => {
                    if k == j {
                        self.stick_prev * (1.0 - self.stick_next[j]) * p1(j, l)
                    } else {
                        0.0
                    }
                }
                (false, false) => (1.0 - self.stick_prev) * p1(j, k) * (1.0 - self.stick_next[k]) * p2(j, k, l),
            },
        }
    }
}

/// All 4(K + 1) options with their weights (illegal ones weigh zero).
pub fn case_weights(ctx: &CaseContext<'_>) -> Vec<CaseOption> {
    let mut out = Vec::with_capacity(4 * (ctx.n_states + 1));
    for k in 0..=ctx.n_states {
        for w_t in [false, true] {
            for w_next in [false, true] {
                out.push(CaseOption {
                    state: k,
                    w_t,
                    w_next,
                    weight: ctx.weight(k, w_t, w_next),
                });
            }
        }
    }
    out
}

/// Persistence parameters of the auxiliary new-state slot.
struct NewSlot {
    kappa: f64,
    weights: Vec<f64>,
}

fn stick_prob(state: &ChainState, data: &Prepared, k: usize, slot: &NewSlot, t: usize) -> f64 {
    let (kappa, weights) = if k < state.n_states() {
        (state.kappa[k], &state.recurrence.weights[k])
    } else {
        (slot.kappa, &slot.weights)
    };
    match state.variant {
        ModelVariant::Hdp | ModelVariant::Sticky => 0.0,
        ModelVariant::DisentangledSticky => kappa,
        ModelVariant::RecurrentSticky => {
            if t == 0 {
                kappa
            } else {
                clamp_unit(logistic(data.inputs.predictor(weights, t - 1)))
            }
        }
    }
}

pub(super) fn sweep(state: &mut ChainState, model: &Model, data: &Prepared) -> Result<()> {
    let mut rng = std::mem::replace(&mut state.rng, RngStream::new(0, 0));
    let out = sweep_inner(state, model, data, &mut rng);
    state.rng = rng;
    out
}

fn sweep_inner(state: &mut ChainState, model: &Model, data: &Prepared, rng: &mut RngStream) -> Result<()> {
    assign_states(state, data, rng)?;
    prune(state)?;
    update_persistence(state, model, data, rng)?;
    update_transitions(state, model, rng)?;
    state.emission.rebuild_stats(&data.design, &state.z)?;
    state.emission.sample_all(rng)?;
    Ok(())
}

fn assign_states(state: &mut ChainState, data: &Prepared, rng: &mut RngStream) -> Result<()> {
    let t_len = data.len();
    let design = &data.design;
    let prior = state.emission.prior().clone();
    let empty_post = prior.posterior(&SuffStats::zeros(prior.dim(), prior.regressor_dim()))?;
    state.emission.rebuild_stats(design, &state.z)?;
    let mut n = transition_counts(&state.z, &state.w, state.n_states());
    let mut post: Vec<Posterior> = (0..state.n_states())
        .map(|j| state.emission.posterior(j))
        .collect::<Result<_>>()?;
    let p = data.inputs.dim();
    let (r1, r2) = (state.hyper.rho1, state.hyper.rho2);
    let has_sticks = state.variant.has_sticks();
    let sweep = state.sweep;
    let context = |t: usize, e: Error| match e {
        Error::Internal(m) => Error::Internal(format!("sweep {sweep}, t = {t}: {m}")),
        other => other,
    };
    let mut stick_next = Vec::new();
    let mut weights = Vec::new();
    for t in 0..t_len {
        let old = state.z[t];
        let prev = (t > 0).then(|| state.z[t - 1]);
        let next = (t + 1 < t_len).then(|| state.z[t + 1]);
        state.emission.remove(old, design, t).map_err(|e| context(t, e))?;
        post[old] = state.emission.posterior(old)?;
        if let Some(j) = prev {
            if !state.w[t] {
                n.dec(j, old).map_err(|e| context(t, e))?;
            }
        }
        if let Some(l) = next {
            if !state.w[t + 1] {
                n.dec(old, l).map_err(|e| context(t, e))?;
            }
        }
        let k_n = state.n_states();
        let slot = if has_sticks {
            NewSlot {
                kappa: clamp_unit(sample_beta(r1, r2, rng)?),
                weights: if state.variant == ModelVariant::RecurrentSticky {
                    sample_weight_prior(p, state.recurrence.prior_var, rng)
                } else {
                    Vec::new()
                },
            }
        } else {
            NewSlot {
                kappa: 0.0,
                weights: Vec::new(),
            }
        };
        let stick_prev = prev.map_or(0.0, |j| stick_prob(state, data, j, &slot, t));
        stick_next.clear();
        if next.is_some() {
            stick_next.extend((0..=k_n).map(|k| stick_prob(state, data, k, &slot, t + 1)));
        } else {
            stick_next.resize(k_n + 1, 0.0);
        }
        let ctx = CaseContext {
            prev,
            next,
            n_states: k_n,
            beta: &state.beta,
            alpha: state.hyper.alpha,
            kappa_sticky: state.hyper.kappa_sticky,
            counts: &n,
            stick_prev,
            stick_next: &stick_next,
        };
        let options = case_weights(&ctx);
        weights.clear();
        let y = design.y(t);
        let preds: Vec<f64> = match design.x(t) {
            Some(x) => (0..=k_n)
                .map(|k| if k < k_n { &post[k] } else { &empty_post }.predictive_log_likelihood(y, x))
                .collect(),
            None => vec![0.0; k_n + 1],
        };
        weights.extend(options.iter().map(|o| o.weight.ln() + preds[o.state]));
        let pick = options[sample_ln_categorical(&weights, rng).map_err(|e| context(t, e))?];
        let k = pick.state;
        if k == k_n {
            let b = sample_beta(1.0, state.hyper.gamma, rng)?;
            let rest = state.beta[k_n];
            state.beta[k_n] = b * rest;
            state.beta.push((1.0 - b) * rest);
            n.grow();
            let theta = empty_post.sample(rng)?;
            state.emission.push_state(theta);
            state.kappa.push(slot.kappa);
            state
                .recurrence
                .weights
                .push(if slot.weights.is_empty() { vec![0.0; p] } else { slot.weights });
            state.eta.push_state();
            post.push(empty_post.clone());
        }
        state.z[t] = k;
        if t > 0 {
            state.w[t] = pick.w_t;
        }
        if let Some(l) = next {
            state.w[t + 1] = pick.w_next;
            if !pick.w_next {
                n.inc(k, l);
            }
        }
        if let Some(j) = prev {
            if !state.w[t] {
                n.inc(j, k);
            }
        }
        state.emission.accumulate(k, design, t)?;
        post[k] = state.emission.posterior(k)?;
    }
    Ok(())
}

/// Drop states with no assigned timesteps, merging their weight into the
/// unrepresented remainder, and compact labels.
fn prune(state: &mut ChainState) -> Result<()> {
    let k_n = state.n_states();
    let mut used = vec![false; k_n];
    for &k in &state.z {
        used[k] = true;
    }
    if used.iter().all(|&u| u) {
        return Ok(());
    }
    let keep: Vec<usize> = (0..k_n).filter(|&k| used[k]).collect();
    let mut relabel = vec![usize::MAX; k_n];
    for (new, &old) in keep.iter().enumerate() {
        relabel[old] = new;
    }
    for z in &mut state.z {
        *z = relabel[*z];
    }
    let dropped: f64 = (0..k_n).filter(|&k| !used[k]).map(|k| state.beta[k]).sum();
    let rest = state.beta[k_n] + dropped;
    state.beta = keep.iter().map(|&k| state.beta[k]).chain(std::iter::once(rest)).collect();
    state.kappa = keep.iter().map(|&k| state.kappa[k]).collect();
    state.recurrence.weights = keep.iter().map(|&k| state.recurrence.weights[k].clone()).collect();
    state.eta.retain_states(&keep);
    state.emission.retain_states(&keep);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (CountMatrix, Vec<f64>) {
        let n = CountMatrix::from_rows(vec![vec![3, 1], vec![2, 4]]).unwrap();
        (n, vec![0.5, 0.3, 0.2])
    }

    #[test]
    fn weights_match_hand_computation() {
        let (n, beta) = fixture();
        let stick_next = [0.6, 0.2, 0.9];
        let ctx = CaseContext {
            prev: Some(0),
            next: Some(1),
            n_states: 2,
            beta: &beta,
            alpha: 2.0,
            kappa_sticky: 0.0,
            counts: &n,
            stick_prev: 0.7,
            stick_next: &stick_next,
        };
        // Hand-evaluated: n_0· = 4, n_1· = 6, α = 2.
        let p1 = |k: usize| (2.0 * beta[k] + [3.0, 1.0, 0.0][k]) / (2.0 + 4.0);
        let w11 = 0.0; // j ≠ l
        let w01 = 0.3 * p1(1) * 0.2;
        let w10 = 0.7 * (1.0 - 0.6) * (2.0 * 0.3 + 1.0) / 6.0;
        let w00_0 = 0.3 * p1(0) * (1.0 - 0.6) * (2.0 * 0.3 + 1.0 + 0.0) / (2.0 + 4.0 + 1.0);
        let w00_1 = 0.3 * p1(1) * (1.0 - 0.2) * (2.0 * 0.3 + 4.0) / (2.0 + 6.0);
        let w00_new = 0.3 * p1(2) * (1.0 - 0.9) * (2.0 * 0.3) / 2.0;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(ctx.weight(0, true, true), w11));
        assert!(close(ctx.weight(1, false, true), w01));
        assert!(close(ctx.weight(0, true, false), w10));
        assert!(close(ctx.weight(0, false, false), w00_0));
        assert!(close(ctx.weight(1, false, false), w00_1));
        assert!(close(ctx.weight(2, false, false), w00_new));
        assert_eq!(ctx.weight(1, true, false), 0.0);
        assert_eq!(ctx.weight(2, true, true), 0.0);
    }

    #[test]
    fn single_timestep_uses_beta() {
        let (n, beta) = fixture();
        let ctx = CaseContext {
            prev: None,
            next: None,
            n_states: 2,
            beta: &beta,
            alpha: 2.0,
            kappa_sticky: 0.0,
            counts: &n,
            stick_prev: 0.0,
            stick_next: &[0.0; 3],
        };
        let w = case_weights(&ctx);
        let total: f64 = w.iter().map(|o| o.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for o in w.iter().filter(|o| !o.w_t && !o.w_next) {
            assert_eq!(o.weight, beta[o.state]);
        }
    }
}
