//! Conditional updates shared by both samplers.

use crate::error::Result;
use crate::hdp::{
    resample_beta_direct_from_counts, resample_beta_from_dish_counts, resample_concentration, resample_pi_bar,
    resample_sticky_ratio, sample_crf_tables, sample_table_counts_sticky, sticky_overrides,
    RhoLikelihood,
};
use crate::kernels::{sample_beta_logs, RngStream};
use crate::recurrence::{clamp_unit, resample_kappa_initial, resample_regression, resample_used_pg_auxiliaries};

use super::{stick_counts, transition_counts, ChainState, KappaInitialUpdate, Model, ModelVariant, Prepared, SamplerKind};

/// Self-persistence block: (ρ, κ) for the disentangled model; κ_{·,1}, ρ,
/// Pólya-Gamma auxiliaries and regression weights for the recurrent model.
pub(super) fn update_persistence(state: &mut ChainState, model: &Model, data: &Prepared, rng: &mut RngStream) -> Result<()> {
    let n_states = state.n_states();
    match state.variant {
        ModelVariant::Hdp | ModelVariant::Sticky => {}
        ModelVariant::DisentangledSticky => {
            let counts = stick_counts(&state.z, &state.w, n_states);
            let rho = model.rho_grid().sample(RhoLikelihood::BetaBinomial(&counts), rng)?;
            state.hyper.rho1 = rho.rho1;
            state.hyper.rho2 = rho.rho2;
            state.phi_eta = (rho.phi, rho.eta);
            state.kappa = resample_kappa_initial(&counts, rho.rho1, rho.rho2, rng)?;
        }
        ModelVariant::RecurrentSticky => {
            let (r1, r2) = (state.hyper.rho1, state.hyper.rho2);
            let counts = stick_counts(&state.z, &state.w, n_states);
            let logs: Vec<(f64, f64)> = counts
                .iter()
                .map(|&(s, f)| match model.priors.kappa_initial {
                    KappaInitialUpdate::Exact => sample_beta_logs(r1, r2, rng),
                    KappaInitialUpdate::StickCounts => sample_beta_logs(r1 + s as f64, r2 + f as f64, rng),
                })
                .collect::<Result<_>>()?;
            state.kappa = logs.iter().map(|l| clamp_unit(l.0.exp())).collect();
            let rho = model.rho_grid().sample(RhoLikelihood::BetaDensities(&logs), rng)?;
            state.hyper.rho1 = rho.rho1;
            state.hyper.rho2 = rho.rho2;
            state.phi_eta = (rho.phi, rho.eta);
            if !model.mutations.skip_pg {
                resample_used_pg_auxiliaries(&mut state.eta, &state.recurrence, &data.inputs, &state.z, rng)?;
            }
            let pv = state.recurrence.prior_var;
            for j in 0..n_states {
                state.recurrence.weights[j] =
                    resample_regression(j, &data.inputs, &state.z, &state.w, &state.eta, pv, rng)?;
            }
        }
    }
    if !(model.mutations.freeze_kappa && state.variant == ModelVariant::RecurrentSticky) {
        state.refresh_schedule(&data.inputs);
    }
    Ok(())
}

/// Transition block: CRF tables, sticky overrides, α (or α + κ), the
/// sticky ratio, γ through top-level tables, then β and (weak-limit) π̄.
/// The initial state z₀ is a direct draw from β and counts as one extra
/// top-level customer.
pub(super) fn update_transitions(state: &mut ChainState, model: &Model, rng: &mut RngStream) -> Result<()> {
    let n_states = state.n_states();
    let pr = &model.priors;
    let n = transition_counts(&state.z, &state.w, n_states);
    let beta_active = &state.beta[..n_states];
    let sticky = state.variant == ModelVariant::Sticky;
    let m = sample_table_counts_sticky(&n, state.hyper.alpha, state.hyper.kappa_sticky, beta_active, rng)?;
    let (m_bar, overrides) = if sticky {
        sticky_overrides(&m, state.sticky_ratio, beta_active, rng)
    } else {
        (m.clone(), 0)
    };
    let sizes: Vec<u64> = (0..n_states).map(|j| n.row_sum(j)).collect();
    let tables = m.total();
    if sticky {
        let total = state.hyper.alpha + state.hyper.kappa_sticky;
        let total = resample_concentration(total, &sizes, tables, pr.alpha, pr.concentration_iters, rng)?;
        state.sticky_ratio = resample_sticky_ratio(overrides, tables, pr.sticky_ratio_cells, rng)?;
        state.hyper.alpha = total * (1.0 - state.sticky_ratio);
        state.hyper.kappa_sticky = total * state.sticky_ratio;
    } else {
        state.hyper.alpha =
            resample_concentration(state.hyper.alpha, &sizes, tables, pr.alpha, pr.concentration_iters, rng)?;
    }
    let mut top = m_bar.col_sums();
    if let Some(&z0) = state.z.first() {
        top[z0] += 1;
    }
    let customers: u64 = top.iter().sum();
    match state.sampler {
        SamplerKind::WeakLimit => {
            let per_dish = state.hyper.gamma / n_states as f64;
            let dishes: u64 = top.iter().map(|&c| sample_crf_tables(c, per_dish, rng)).sum();
            state.hyper.gamma =
                resample_concentration(state.hyper.gamma, &[customers], dishes, pr.gamma, pr.concentration_iters, rng)?;
            state.beta = resample_beta_from_dish_counts(&top, state.hyper.gamma, rng)?;
            state.pi_bar = resample_pi_bar(&n, state.hyper.alpha, state.hyper.kappa_sticky, &state.beta, rng)?;
        }
        SamplerKind::Direct => {
            state.hyper.gamma = resample_concentration(
                state.hyper.gamma,
                &[customers],
                n_states as u64,
                pr.gamma,
                pr.concentration_iters,
                rng,
            )?;
            state.beta = resample_beta_direct_from_counts(&top, state.hyper.gamma, rng)?;
        }
    }
    Ok(())
}
