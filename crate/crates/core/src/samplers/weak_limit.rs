//! Weak-limit blocked Gibbs sweep.

use crate::error::Result;
use crate::kernels::RngStream;

use super::blocks::{update_persistence, update_transitions};
use super::forward_backward::{backward, sample_path, FbProblem};
use super::{ChainState, Model, Prepared};

pub(super) fn sweep(state: &mut ChainState, model: &Model, data: &Prepared) -> Result<()> {
    let mut rng = std::mem::replace(&mut state.rng, RngStream::new(0, 0));
    let out = sweep_inner(state, model, data, &mut rng);
    state.rng = rng;
    out
}

fn sweep_inner(state: &mut ChainState, model: &Model, data: &Prepared, rng: &mut RngStream) -> Result<()> {
    let loglik = state.emission.likelihood_matrix(&data.design);
    let problem = FbProblem {
        initial: &state.beta,
        rows: &state.pi_bar,
        kappa: &state.schedule,
        loglik: &loglik,
    };
    let msg = backward(&problem)?;
    let (z, w) = sample_path(&problem, &msg, rng)?;
    state.z = z;
    state.w = w;
    update_persistence(state, model, data, rng)?;
    update_transitions(state, model, rng)?;
    state.emission.rebuild_stats(&data.design, &state.z)?;
    state.emission.sample_all(rng)?;
    Ok(())
}
