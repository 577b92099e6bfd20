//! Versioned JSON chain snapshots.

use serde::{Deserialize, Serialize};

use super::{ChainState, Model, ModelVariant, Prepared, SamplerKind};
use crate::emissions::{EmissionState, Theta};
use crate::error::{Error, Result};
use crate::hdp::HyperParams;
use crate::kernels::{RngState, RngStream};
use crate::linalg::Mat;
use crate::recurrence::{PgAuxiliaries, RecurrenceParams};

pub const SNAPSHOT_VERSION: u32 = 1;

/// Row-major array with explicit dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl FlatArray {
    fn check(&self, what: &str) -> Result<()> {
        if self.dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::Data(format!("snapshot array {what} does not match its dims")));
        }
        Ok(())
    }
}

fn flatten_mats<'a>(mats: impl Iterator<Item = &'a Mat>, rows: usize, cols: usize) -> FlatArray {
    let mut data = Vec::new();
    let mut n = 0;
    for m in mats {
        n += 1;
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
    }
    FlatArray {
        dims: vec![n, rows, cols],
        data,
    }
}

fn unflatten_mats(a: &FlatArray, what: &str) -> Result<Vec<Mat>> {
    a.check(what)?;
    let [n, r, c] = a.dims[..] else {
        return Err(Error::Data(format!("snapshot array {what} must be 3-dimensional")));
    };
    Ok((0..n)
        .map(|k| Mat::from_row_slice(r, c, &a.data[k * r * c..(k + 1) * r * c]))
        .collect())
}

/// Complete chain state; restoring it and sweeping reproduces the original
/// chain bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub version: u32,
    pub variant: ModelVariant,
    pub sampler: SamplerKind,
    pub sweep: u64,
    pub z: Vec<usize>,
    pub w: Vec<bool>,
    pub hyper: HyperParams,
    pub sticky_ratio: f64,
    pub phi_eta: (f64, f64),
    pub beta: Vec<f64>,
    pub pi_bar: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    /// Regression weights, dims [K, p].
    pub recurrence: FlatArray,
    pub recurrence_prior_var: f64,
    /// Pólya-Gamma auxiliaries, dims [K, T − 1].
    pub pg_auxiliaries: FlatArray,
    /// Emission coefficients, dims [K, d, p].
    pub theta_a: FlatArray,
    /// Emission covariances, dims [K, d, d].
    pub theta_sigma: FlatArray,
    pub rng: RngState,
}

impl ChainSnapshot {
    pub fn capture(state: &ChainState) -> Self {
        let k = state.n_states();
        let p = state.recurrence.weights.first().map_or(0, |w| w.len());
        let prior = state.emission.prior();
        let (d, q) = (prior.dim(), prior.regressor_dim());
        ChainSnapshot {
            version: SNAPSHOT_VERSION,
            variant: state.variant,
            sampler: state.sampler,
            sweep: state.sweep,
            z: state.z.clone(),
            w: state.w.clone(),
            hyper: state.hyper,
            sticky_ratio: state.sticky_ratio,
            phi_eta: state.phi_eta,
            beta: state.beta.clone(),
            pi_bar: state.pi_bar.clone(),
            kappa: state.kappa.clone(),
            recurrence: FlatArray {
                dims: vec![k, p],
                data: state.recurrence.weights.concat(),
            },
            recurrence_prior_var: state.recurrence.prior_var,
            pg_auxiliaries: FlatArray {
                dims: vec![k, state.eta.width()],
                data: state.eta.values().to_vec(),
            },
            theta_a: flatten_mats(state.thetas().iter().map(|t| t.a()), d, q),
            theta_sigma: flatten_mats(state.thetas().iter().map(|t| t.sigma()), d, d),
            rng: state.rng.state(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: ChainSnapshot = serde_json::from_str(text)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Data(format!(
                "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        Ok(snap)
    }

    /// Rebuild a chain state against the model and data it was taken from.
    pub fn restore(&self, model: &Model, data: &Prepared) -> Result<ChainState> {
        if self.variant != model.variant || self.sampler != model.sampler {
            return Err(Error::Config("snapshot was taken under a different model or sampler".into()));
        }
        if self.z.len() != data.len() {
            return Err(Error::Data(format!(
                "snapshot has {} timesteps but the data has {}",
                self.z.len(),
                data.len()
            )));
        }
        self.recurrence.check("recurrence")?;
        let k = self.kappa.len();
        let a = unflatten_mats(&self.theta_a, "theta_a")?;
        let s = unflatten_mats(&self.theta_sigma, "theta_sigma")?;
        if a.len() != k || s.len() != k || self.recurrence.dims.first() != Some(&k) {
            return Err(Error::Data("snapshot per-state arrays disagree on the state count".into()));
        }
        let thetas = a
            .into_iter()
            .zip(s)
            .map(|(a, s)| Theta::new(a, s))
            .collect::<Result<Vec<_>>>()?;
        let p = self.recurrence.dims.get(1).copied().unwrap_or(0);
        let weights = (0..k).map(|j| self.recurrence.data[j * p..(j + 1) * p].to_vec()).collect();
        let mut emission = EmissionState::with_theta(model.emission_prior.clone(), thetas);
        emission.rebuild_stats(&data.design, &self.z)?;
        let rng = RngStream::from_state(&self.rng).ok_or_else(|| Error::Data("bad rng position".into()))?;
        let mut state = ChainState {
            variant: self.variant,
            sampler: self.sampler,
            z: self.z.clone(),
            w: self.w.clone(),
            beta: self.beta.clone(),
            pi_bar: self.pi_bar.clone(),
            kappa: self.kappa.clone(),
            recurrence: RecurrenceParams {
                weights,
                prior_var: self.recurrence_prior_var,
            },
            eta: PgAuxiliaries::from_values(k, data.len(), self.pg_auxiliaries.data.clone())?,
            schedule: crate::recurrence::KappaSchedule::zeros(k, data.len()),
            emission,
            hyper: self.hyper,
            sticky_ratio: self.sticky_ratio,
            phi_eta: self.phi_eta,
            sweep: self.sweep,
            rng,
        };
        state.refresh_schedule(&data.inputs);
        state.validate()?;
        Ok(state)
    }
}
