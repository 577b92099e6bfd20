//! Joint-distribution test of the samplers.
//!
//! The marginal-conditional side draws (parameters, latents, data) from the
//! prior. The successive-conditional side alternates one sampler sweep with
//! a fresh draw of the data given everything else. Both target the same
//! joint, so every statistic must agree in mean.

use serde::{Deserialize, Serialize};

use super::{count_switches, ChainState, Model, ModelVariant, Mutations, Prepared, Priors, SamplerKind};
use crate::data::ObservationSequence;
use crate::emissions::{EmissionFamily, EmissionPrior, EmissionState};
use crate::error::Result;
use crate::hdp::{sample_sticky_ratio_prior, HyperParams};
use crate::kernels::{logistic, sample_bernoulli, sample_beta, sample_categorical, sample_dirichlet, uniform_open, MniwParams, RngStream};
use crate::linalg::Mat;
use crate::recurrence::{clamp_unit, sample_weight_prior, PgAuxiliaries, RecurrenceParams, RegressionInput, RegressionInputs, KappaSchedule};

#[derive(Clone, Debug)]
pub struct GewekeConfig {
    pub variant: ModelVariant,
    pub sampler: SamplerKind,
    pub t_len: usize,
    pub truncation: usize,
    pub n_samples: usize,
    /// Number of batches for the successive-side standard error.
    pub batches: usize,
    pub mutations: Mutations,
    pub seed: u64,
}

impl GewekeConfig {
    pub fn new(variant: ModelVariant, sampler: SamplerKind, n_samples: usize, seed: u64) -> Self {
        Self {
            variant,
            sampler,
            t_len: 20,
            truncation: 3,
            n_samples,
            batches: 100,
            mutations: Mutations::default(),
            seed,
        }
    }

    /// Small proper priors: scalar Gaussian emissions and a unit-variance
    /// recurrence prior so every block moves visibly.
    pub fn model(&self) -> Result<Model> {
        let params = MniwParams {
            m: Mat::from_element(1, 1, 0.0),
            v: Mat::from_element(1, 1, 1.0),
            s0: Mat::from_element(1, 1, 1.0),
            n0: 6.0,
        };
        let priors = Priors {
            alpha: crate::hdp::GammaPrior::new(2.0, 1.0),
            gamma: crate::hdp::GammaPrior::new(2.0, 1.0),
            rho_grid: (20, 20),
            sticky_ratio_cells: 20,
            recurrence_prior_var: 1.0,
            regression_input: RegressionInput::Raw,
            standardize_inputs: false,
            ..Priors::default()
        };
        let prior = EmissionPrior::new(EmissionFamily::Gaussian, params)?;
        Ok(Model::new(self.variant, self.sampler, self.truncation, priors, prior)?.with_mutations(self.mutations))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub marginal_se: f64,
    pub successive_mean: f64,
    pub successive_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn stat(&self, name: &str) -> Option<&GewekeStat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

/// Names of the statistics tracked for a variant.
pub fn statistic_names(variant: ModelVariant) -> Vec<&'static str> {
    let mut names = vec!["alpha", "gamma", "occupancy_entropy", "data_mean", "data_var", "theta_mean", "switches"];
    if variant == ModelVariant::Sticky {
        names.push("sticky_ratio");
    }
    if variant.has_sticks() {
        names.extend(["kappa_mean", "phi", "w_mean"]);
    }
    if variant == ModelVariant::RecurrentSticky {
        names.extend(["r_slope_mean", "r_intercept_mean", "r_square_mean", "stick_corr"]);
    }
    names
}

fn statistics(state: &ChainState, obs: &ObservationSequence) -> Vec<f64> {
    let t_len = state.z.len();
    let tf = t_len as f64;
    let k = state.n_states();
    let mut occ = vec![0usize; k];
    for &z in &state.z {
        occ[z] += 1;
    }
    let entropy: f64 = occ
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / tf;
            -p * p.ln()
        })
        .sum();
    let ys = obs.values();
    let mean = ys.iter().sum::<f64>() / tf;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / tf;
    let theta_mean = state.thetas().iter().map(|t| t.a()[(0, 0)]).sum::<f64>() / k as f64;
    let mut out = vec![
        state.hyper.alpha + state.hyper.kappa_sticky,
        state.hyper.gamma,
        entropy,
        mean,
        var,
        theta_mean,
        count_switches(&state.z) as f64,
    ];
    if state.variant == ModelVariant::Sticky {
        out.push(state.sticky_ratio);
    }
    if state.variant.has_sticks() {
        out.push(state.kappa.iter().sum::<f64>() / k as f64);
        out.push(state.phi_eta.0);
        out.push(state.w.iter().filter(|&&w| w).count() as f64 / tf);
    }
    if state.variant == ModelVariant::RecurrentSticky {
        let w = &state.recurrence.weights;
        out.push(w.iter().map(|r| r[0]).sum::<f64>() / k as f64);
        out.push(w.iter().map(|r| r[1]).sum::<f64>() / k as f64);
        out.push(w.iter().flatten().map(|v| v * v).sum::<f64>() / (2 * k) as f64);
        // Mean of w_{t+1}·y_t: couples the data to the regression.
        let c: f64 = (1..t_len).filter(|&t| state.w[t]).map(|t| ys[t - 1]).sum();
        out.push(c / tf);
    }
    out
}

/// Draw the observation at t given the latent path and parameters.
fn draw_emission(state: &ChainState, t: usize, rng: &mut RngStream) -> f64 {
    state.emission.theta(state.z[t]).sample(&[1.0], rng)[0]
}

/// Stick probability for w_{t+1} given state j and observation y_t.
fn stick_given(state: &ChainState, j: usize, y_t: f64) -> f64 {
    match state.variant {
        ModelVariant::Hdp | ModelVariant::Sticky => 0.0,
        ModelVariant::DisentangledSticky => state.kappa[j],
        ModelVariant::RecurrentSticky => {
            let r = &state.recurrence.weights[j];
            logistic(r[0] * y_t + r[1])
        }
    }
}

/// One prior draw of hyperparameters, parameters, latents and data.
fn simulate_prior(model: &Model, t_len: usize, rng: &mut RngStream) -> Result<(ChainState, ObservationSequence)> {
    let pr = &model.priors;
    let variant = model.variant;
    let total = pr.alpha.sample(rng)?;
    let ratio = if variant == ModelVariant::Sticky {
        sample_sticky_ratio_prior(pr.sticky_ratio_cells, rng)
    } else {
        0.0
    };
    let rho = model.rho_grid().sample_prior(rng);
    let hyper = HyperParams {
        alpha: total * (1.0 - ratio),
        gamma: pr.gamma.sample(rng)?,
        rho1: rho.rho1,
        rho2: rho.rho2,
        kappa_sticky: total * ratio,
    };
    let pv = pr.recurrence_prior_var;
    let mut state = ChainState {
        variant,
        sampler: model.sampler,
        z: Vec::with_capacity(t_len),
        w: Vec::with_capacity(t_len),
        beta: Vec::new(),
        pi_bar: Vec::new(),
        kappa: Vec::new(),
        recurrence: RecurrenceParams {
            weights: Vec::new(),
            prior_var: pv,
        },
        eta: PgAuxiliaries::new(0, t_len),
        schedule: KappaSchedule::zeros(0, t_len),
        emission: EmissionState::with_theta(model.emission_prior.clone(), Vec::new()),
        hyper,
        sticky_ratio: ratio,
        phi_eta: (rho.phi, rho.eta),
        sweep: 0,
        rng: RngStream::new(0, 0),
    };
    let new_state = |state: &mut ChainState, rng: &mut RngStream| -> Result<()> {
        state.kappa.push(clamp_unit(sample_beta(hyper.rho1, hyper.rho2, rng)?));
        state.recurrence.weights.push(sample_weight_prior(2, pv, rng));
        let theta = state.emission.prior().posterior(&crate::emissions::SuffStats::zeros(1, 1))?.sample(rng)?;
        state.emission.push_state(theta);
        state.eta.push_state();
        Ok(())
    };
    let mut ys = Vec::with_capacity(t_len);
    match model.sampler {
        SamplerKind::WeakLimit => {
            let l = model.truncation;
            state.beta = sample_dirichlet(&vec![hyper.gamma / l as f64; l], rng)?;
            for j in 0..l {
                let conc: Vec<f64> = (0..l)
                    .map(|k| {
                        let c = hyper.alpha * state.beta[k] + if j == k { hyper.kappa_sticky } else { 0.0 };
                        c.max(f64::MIN_POSITIVE)
                    })
                    .collect();
                state.pi_bar.push(sample_dirichlet(&conc, rng)?);
                new_state(&mut state, rng)?;
            }
            for t in 0..t_len {
                let (z, w) = if t == 0 {
                    (sample_categorical(&state.beta, rng)?, false)
                } else {
                    let j = state.z[t - 1];
                    if sample_bernoulli(stick_given(&state, j, ys[t - 1]), rng) {
                        (j, true)
                    } else {
                        (sample_categorical(&state.pi_bar[j], rng)?, false)
                    }
                };
                state.z.push(z);
                state.w.push(w);
                ys.push(draw_emission(&state, t, rng));
            }
        }
        SamplerKind::Direct => {
            // β materialised lazily by stick breaking; rows integrated out
            // through per-restaurant table counts.
            let conc = hyper.alpha + hyper.kappa_sticky;
            let mut rest = 1.0;
            let mut beta: Vec<f64> = Vec::new();
            let mut n: Vec<Vec<u64>> = Vec::new();
            let draw_dish = |beta: &mut Vec<f64>, rest: &mut f64, n: &mut Vec<Vec<u64>>, rng: &mut RngStream| -> Result<(usize, bool)> {
                let mut w = beta.clone();
                w.push(*rest);
                let k = sample_categorical(&w, rng)?;
                if k < beta.len() {
                    return Ok((k, false));
                }
                let b = sample_beta(1.0, hyper.gamma, rng)?;
                beta.push(b * *rest);
                *rest *= 1.0 - b;
                for row in n.iter_mut() {
                    row.push(0);
                }
                n.push(vec![0; beta.len()]);
                Ok((k, true))
            };
            for t in 0..t_len {
                let (z, w, fresh) = if t == 0 {
                    let (k, fresh) = draw_dish(&mut beta, &mut rest, &mut n, rng)?;
                    (k, false, fresh)
                } else {
                    let j = state.z[t - 1];
                    if sample_bernoulli(stick_given(&state, j, ys[t - 1]), rng) {
                        (j, true, false)
                    } else {
                        let row_total: u64 = n[j].iter().sum();
                        let u = uniform_open(rng) * (row_total as f64 + conc);
                        let (k, fresh) = if u < row_total as f64 {
                            let w: Vec<f64> = n[j].iter().map(|&c| c as f64).collect();
                            (sample_categorical(&w, rng)?, false)
                        } else if sample_bernoulli(hyper.kappa_sticky / conc, rng) {
                            (j, false)
                        } else {
                            draw_dish(&mut beta, &mut rest, &mut n, rng)?
                        };
                        n[j][k] += 1;
                        (k, false, fresh)
                    }
                };
                if fresh {
                    new_state(&mut state, rng)?;
                }
                state.z.push(z);
                state.w.push(w);
                ys.push(draw_emission(&state, t, rng));
            }
            beta.push(rest);
            state.beta = beta;
        }
    }
    let obs = ObservationSequence::new(1, ys)?;
    state.schedule = KappaSchedule::zeros(state.n_states(), t_len);
    Ok((state, obs))
}

/// Per-t independence Metropolis-Hastings refresh of the data, proposing
/// from the emission and correcting for the stick term y_t feeds into.
fn redraw_data(state: &ChainState, obs: &mut ObservationSequence, rng: &mut RngStream) {
    let t_len = state.z.len();
    for t in 0..t_len {
        let proposal = draw_emission(state, t, rng);
        let accept = if t + 1 < t_len && state.variant == ModelVariant::RecurrentSticky {
            let j = state.z[t];
            let lik = |y: f64| {
                let s = stick_given(state, j, y);
                if state.w[t + 1] { s } else { 1.0 - s }
            };
            let cur = lik(obs.row(t)[0]);
            uniform_open(rng) * cur < lik(proposal)
        } else {
            true
        };
        if accept {
            obs.row_mut(t)[0] = proposal;
        }
    }
}

fn prepared(model: &Model, obs: &ObservationSequence) -> Result<Prepared> {
    Prepared::new(model, obs.clone())
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

/// Standard error from non-overlapping batch means.
fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let b = batches.clamp(2, xs.len().max(2));
    let size = xs.len() / b;
    if size == 0 {
        return mean_and_se(xs).1;
    }
    let means: Vec<f64> = (0..b)
        .map(|i| xs[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    mean_and_se(&means).1
}

/// Marginal-conditional statistics only.
pub fn marginal_statistics(cfg: &GewekeConfig, model: &Model, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    (0..cfg.n_samples)
        .map(|_| {
            let (state, obs) = simulate_prior(model, cfg.t_len, rng)?;
            Ok(statistics(&state, &obs))
        })
        .collect()
}

/// Successive-conditional statistics only.
pub fn successive_statistics(cfg: &GewekeConfig, model: &Model, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    let (mut state, mut obs) = simulate_prior(model, cfg.t_len, rng)?;
    state.rng = rng.fork(1);
    let data = prepared(model, &obs)?;
    state.refresh_schedule(&data.inputs);
    state.emission.rebuild_stats(&data.design, &state.z)?;
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let data = prepared(model, &obs)?;
        state.sweep(model, &data)?;
        let mut data_rng = std::mem::replace(&mut state.rng, RngStream::new(0, 0));
        redraw_data(&state, &mut obs, &mut data_rng);
        state.rng = data_rng;
        if !model.mutations.freeze_kappa {
            let inputs = RegressionInputs::new(&obs, RegressionInput::Raw, false);
            state.refresh_schedule(&inputs);
        }
        out.push(statistics(&state, &obs));
    }
    Ok(out)
}

pub fn geweke_test(cfg: &GewekeConfig) -> Result<GewekeReport> {
    let model = cfg.model()?;
    let root = RngStream::new(cfg.seed, 0);
    let (marg, succ) = rayon::join(
        || marginal_statistics(cfg, &model, &mut root.fork(0)),
        || successive_statistics(cfg, &model, &mut root.fork(1)),
    );
    let (marg, succ) = (marg?, succ?);
    let names = statistic_names(cfg.variant);
    let stats = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let a: Vec<f64> = marg.iter().map(|s| s[i]).collect();
            let b: Vec<f64> = succ.iter().map(|s| s[i]).collect();
            let (ma, sa) = mean_and_se(&a);
            let (mb, _) = mean_and_se(&b);
            let sb = batch_se(&b, cfg.batches);
            let se = (sa * sa + sb * sb).sqrt();
            let z = if se > 0.0 { (ma - mb) / se } else if ma == mb { 0.0 } else { f64::INFINITY };
            GewekeStat {
                name: name.to_string(),
                marginal_mean: ma,
                marginal_se: sa,
                successive_mean: mb,
                successive_se: sb,
                z,
            }
        })
        .collect();
    Ok(GewekeReport { stats })
}
