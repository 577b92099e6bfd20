//! Burn-in, thinning and posterior summaries for one chain.

use super::{ChainSnapshot, ChainState, Model, Prepared, SweepDiagnostics};
use crate::bench::align_to_reference;
use crate::error::{Error, Result};
use crate::kernels::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainSettings {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iters {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burnin, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether the state after sweep `s` (1-based) is saved.
    pub fn keeps(&self, s: usize) -> bool {
        s > self.burnin && (s - self.burnin) % self.thin == 0
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub trace: Vec<SweepDiagnostics>,
    pub samples: Vec<ChainSnapshot>,
    /// Per-timestep most frequent label across saved samples, after
    /// aligning every sample to the first one.
    pub modal: Vec<usize>,
    pub final_state: ChainState,
}

pub fn run_chain(model: &Model, data: &Prepared, settings: ChainSettings, rng: RngStream) -> Result<ChainOutput> {
    settings.validate()?;
    let mut state = ChainState::initialize(model, data, rng)?;
    let mut trace = Vec::with_capacity(settings.iters);
    let mut samples = Vec::new();
    for s in 1..=settings.iters {
        trace.push(state.sweep(model, data)?);
        if settings.keeps(s) {
            samples.push(ChainSnapshot::capture(&state));
        }
    }
    let paths: Vec<&[usize]> = samples.iter().map(|s| s.z.as_slice()).collect();
    let modal = modal_states(&paths);
    Ok(ChainOutput {
        trace,
        samples,
        modal,
        final_state: state,
    })
}

/// Marginal argmax per timestep after label alignment to the first path.
/// Ties go to the smallest label.
pub fn modal_states(paths: &[&[usize]]) -> Vec<usize> {
    let Some(first) = paths.first() else {
        return Vec::new();
    };
    let t_len = first.len();
    let aligned: Vec<Vec<usize>> = paths.iter().map(|p| align_to_reference(p, first)).collect();
    let n_labels = aligned.iter().flatten().max().map_or(0, |m| m + 1);
    let mut counts = vec![0u32; n_labels];
    (0..t_len)
        .map(|t| {
            counts.iter_mut().for_each(|c| *c = 0);
            for a in &aligned {
                counts[a[t]] += 1;
            }
            let mut best = 0;
            for (k, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burnin_must_precede_end() {
        let s = ChainSettings {
            iters: 10,
            burnin: 10,
            thin: 1,
        };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn modal_majority_after_alignment() {
        let a = [0, 0, 1, 1];
        let b = [1, 1, 0, 0];
        let c = [0, 1, 1, 1];
        assert_eq!(modal_states(&[&a, &b, &c]), vec![0, 0, 1, 1]);
    }
}
