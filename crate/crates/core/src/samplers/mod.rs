//! MCMC samplers for the four model variants.
//!
//! Two procedures share one chain representation:
//! * the weak-limit blocked Gibbs sampler (finite truncation L, joint
//!   forward-backward over (z_t, w_t));
//! * the direct-assignment sampler (transition rows and emission parameters
//!   integrated out, one timestep at a time, unbounded state count).

mod blocks;
mod chain;
mod direct;
pub mod forward_backward;
pub mod geweke;
mod snapshot;
mod weak_limit;

use serde::{Deserialize, Serialize};

pub use chain::{modal_states, run_chain, ChainOutput, ChainSettings};
pub use direct::{case_weights, CaseContext, CaseOption};
pub use snapshot::{ChainSnapshot, FlatArray, SNAPSHOT_VERSION};

use crate::data::ObservationSequence;
use crate::emissions::{Design, EmissionPrior, EmissionState, Theta};
use crate::error::{Error, Result};
use crate::hdp::{
    sample_sticky_ratio_prior, CountMatrix, GammaPrior, HyperParams, RhoGrid,
};
use crate::kernels::{sample_beta, sample_dirichlet, RngStream};
use crate::recurrence::{
    clamp_unit, compute_kappa_schedule, sample_weight_prior, KappaSchedule, PgAuxiliaries, RecurrenceParams, RegressionInput,
    RegressionInputs,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "hdp")]
    Hdp,
    #[serde(rename = "s-hdp")]
    Sticky,
    #[serde(rename = "ds-hdp")]
    DisentangledSticky,
    #[serde(rename = "rs-hdp")]
    RecurrentSticky,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Hdp,
        ModelVariant::Sticky,
        ModelVariant::DisentangledSticky,
        ModelVariant::RecurrentSticky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Hdp => "hdp",
            ModelVariant::Sticky => "s-hdp",
            ModelVariant::DisentangledSticky => "ds-hdp",
            ModelVariant::RecurrentSticky => "rs-hdp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Whether the variant carries stick indicators w.
    pub fn has_sticks(self) -> bool {
        matches!(self, ModelVariant::DisentangledSticky | ModelVariant::RecurrentSticky)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    WeakLimit,
    Direct,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::WeakLimit => "weak-limit",
            SamplerKind::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weak-limit" => Some(SamplerKind::WeakLimit),
            "direct" => Some(SamplerKind::Direct),
            _ => None,
        }
    }
}

/// How the recurrent model refreshes the initial persistence κ_{j,1}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaInitialUpdate {
    /// Exact conditional. With w₁ fixed to zero, κ_{j,1} touches no data
    /// and its conditional is the Beta(ρ₁, ρ₂) prior.
    #[default]
    Exact,
    /// Beta(ρ₁ + sticks_j, ρ₂ + switches_j) over all stick indicators.
    StickCounts,
}

/// Prior settings shared by every variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    /// Prior on α (on α + κ for the sticky variant).
    pub alpha: GammaPrior,
    pub gamma: GammaPrior,
    pub rho_grid: (usize, usize),
    pub sticky_ratio_cells: usize,
    pub recurrence_prior_var: f64,
    pub regression_input: RegressionInput,
    pub standardize_inputs: bool,
    pub kappa_initial: KappaInitialUpdate,
    /// Auxiliary-variable rounds per α/γ refresh.
    pub concentration_iters: usize,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            alpha: GammaPrior::new(1.0, 0.01),
            gamma: GammaPrior::new(2.0, 1.0),
            rho_grid: (100, 100),
            sticky_ratio_cells: 100,
            recurrence_prior_var: 1e-4,
            regression_input: RegressionInput::Raw,
            standardize_inputs: false,
            kappa_initial: KappaInitialUpdate::Exact,
            concentration_iters: 1,
        }
    }
}

/// Deliberate sampler defects used to check that the Geweke harness is
/// sensitive. Never enabled outside tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Mutations {
    pub skip_pg: bool,
    pub freeze_kappa: bool,
}

/// Everything that defines the target distribution and the sampler.
#[derive(Clone, Debug)]
pub struct Model {
    pub variant: ModelVariant,
    pub sampler: SamplerKind,
    /// Weak-limit truncation L (ignored by the direct sampler).
    pub truncation: usize,
    pub priors: Priors,
    pub emission_prior: EmissionPrior,
    pub mutations: Mutations,
    rho_grid: RhoGrid,
}

impl Model {
    pub fn new(
        variant: ModelVariant,
        sampler: SamplerKind,
        truncation: usize,
        priors: Priors,
        emission_prior: EmissionPrior,
    ) -> Result<Self> {
        if sampler == SamplerKind::WeakLimit && truncation == 0 {
            return Err(Error::Config("weak-limit truncation L must be at least 1".into()));
        }
        if !(priors.recurrence_prior_var > 0.0) {
            return Err(Error::Config("recurrence prior variance must be positive".into()));
        }
        for (name, g) in [("alpha", priors.alpha), ("gamma", priors.gamma)] {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::Config(format!("{name} prior needs positive shape and rate")));
            }
        }
        if priors.rho_grid.0 == 0 || priors.rho_grid.1 == 0 || priors.sticky_ratio_cells == 0 {
            return Err(Error::Config("grid sizes must be positive".into()));
        }
        let rho_grid = RhoGrid::new(priors.rho_grid.0, priors.rho_grid.1);
        Ok(Self {
            variant,
            sampler,
            truncation,
            priors,
            emission_prior,
            mutations: Mutations::default(),
            rho_grid,
        })
    }

    pub fn rho_grid(&self) -> &RhoGrid {
        &self.rho_grid
    }

    pub fn with_mutations(mut self, mutations: Mutations) -> Self {
        self.mutations = mutations;
        self
    }
}

/// Observations with the derived layouts the sweeps need.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub obs: ObservationSequence,
    pub design: Design,
    pub inputs: RegressionInputs,
}

impl Prepared {
    pub fn new(model: &Model, obs: ObservationSequence) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Data("empty observation sequence".into()));
        }
        if obs.dim() != model.emission_prior.dim() {
            return Err(Error::Data(format!(
                "observations have dimension {} but the emission prior expects {}",
                obs.dim(),
                model.emission_prior.dim()
            )));
        }
        let design = Design::new(model.emission_prior.family(), &obs);
        let inputs = RegressionInputs::new(&obs, model.priors.regression_input, model.priors.standardize_inputs);
        Ok(Self { obs, design, inputs })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Per-sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    pub sweep: u64,
    pub joint_loglik: f64,
    pub n_states_used: usize,
    pub n_switches: usize,
    pub hyper: HyperParams,
}

/// Full sampler state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub variant: ModelVariant,
    pub sampler: SamplerKind,
    pub z: Vec<usize>,
    /// Stick indicators; `w[0]` is always false.
    pub w: Vec<bool>,
    /// Global weights: length L (weak-limit) or K + 1 (direct, last entry is
    /// the unrepresented remainder).
    pub beta: Vec<f64>,
    /// Base transition rows π̄ (weak-limit only; the sticky variant stores
    /// its full rows here).
    pub pi_bar: Vec<Vec<f64>>,
    /// Per-state persistence: κ_j (disentangled) or κ_{j,1} (recurrent).
    pub kappa: Vec<f64>,
    pub recurrence: RecurrenceParams,
    pub eta: PgAuxiliaries,
    pub schedule: KappaSchedule,
    pub emission: EmissionState,
    pub hyper: HyperParams,
    /// κ/(α+κ) for the sticky variant.
    pub sticky_ratio: f64,
    /// (φ, η) cell of the current (ρ₁, ρ₂).
    pub phi_eta: (f64, f64),
    pub sweep: u64,
    pub rng: RngStream,
}

impl ChainState {
    /// Number of represented states (L or K).
    pub fn n_states(&self) -> usize {
        self.emission.n_states()
    }

    /// Draw hyperparameters and state parameters from the prior and
    /// initialise the latent path. Weak-limit chains start in cyclic blocks
    /// over all L states; direct chains start with every point in one state
    /// and grow new states from the CRF.
    pub fn initialize(model: &Model, data: &Prepared, mut rng: RngStream) -> Result<Self> {
        let t_len = data.len();
        let pr = &model.priors;
        let n = match model.sampler {
            SamplerKind::WeakLimit => model.truncation,
            SamplerKind::Direct => 1,
        };
        let total = pr.alpha.sample(&mut rng)?;
        let sticky_ratio = if model.variant == ModelVariant::Sticky {
            sample_sticky_ratio_prior(pr.sticky_ratio_cells, &mut rng)
        } else {
            0.0
        };
        let rho = model.rho_grid.sample_prior(&mut rng);
        let hyper = HyperParams {
            alpha: total * (1.0 - sticky_ratio),
            gamma: pr.gamma.sample(&mut rng)?,
            rho1: rho.rho1,
            rho2: rho.rho2,
            kappa_sticky: total * sticky_ratio,
        };
        let block = (t_len / (4 * n)).max(10);
        let z: Vec<usize> = (0..t_len).map(|t| (t / block) % n).collect();
        let w = vec![false; t_len];
        let beta = match model.sampler {
            SamplerKind::WeakLimit => sample_dirichlet(&vec![hyper.gamma / n as f64; n], &mut rng)?,
            SamplerKind::Direct => {
                let mut b = vec![1.0 / (n as f64 + 1.0); n + 1];
                b[n] = 1.0 / (n as f64 + 1.0);
                b
            }
        };
        let pi_bar = match model.sampler {
            SamplerKind::WeakLimit => {
                let conc: Vec<f64> = beta.iter().map(|b| (hyper.alpha * b).max(f64::MIN_POSITIVE)).collect();
                (0..n).map(|_| sample_dirichlet(&conc, &mut rng)).collect::<Result<_>>()?
            }
            SamplerKind::Direct => Vec::new(),
        };
        let kappa = (0..n)
            .map(|_| Ok(clamp_unit(sample_beta(hyper.rho1, hyper.rho2, &mut rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let p = data.inputs.dim();
        let recurrence = RecurrenceParams {
            weights: (0..n)
                .map(|_| sample_weight_prior(p, pr.recurrence_prior_var, &mut rng))
                .collect(),
            prior_var: pr.recurrence_prior_var,
        };
        let mut emission = EmissionState::from_prior(model.emission_prior.clone(), n, &mut rng)?;
        emission.rebuild_stats(&data.design, &z)?;
        emission.sample_all(&mut rng)?;
        let mut state = Self {
            variant: model.variant,
            sampler: model.sampler,
            z,
            w,
            beta,
            pi_bar,
            kappa,
            recurrence,
            eta: PgAuxiliaries::new(n, t_len),
            schedule: KappaSchedule::zeros(n, t_len),
            emission,
            hyper,
            sticky_ratio,
            phi_eta: (rho.phi, rho.eta),
            sweep: 0,
            rng,
        };
        state.refresh_schedule(&data.inputs);
        Ok(state)
    }

    /// Recompute κ_{j,t} from the current persistence parameters.
    pub fn refresh_schedule(&mut self, inputs: &RegressionInputs) {
        let n = self.n_states();
        let t_len = inputs.len();
        self.schedule = match self.variant {
            ModelVariant::Hdp | ModelVariant::Sticky => KappaSchedule::zeros(n, t_len),
            ModelVariant::DisentangledSticky => KappaSchedule::constant(&self.kappa, t_len),
            ModelVariant::RecurrentSticky => compute_kappa_schedule(&self.recurrence, inputs, &self.kappa),
        };
    }

    /// Stick probability of state j for the indicator at time t (t ≥ 1).
    pub fn stick_prob(&self, j: usize, t: usize) -> f64 {
        self.schedule.get(j, t)
    }

    /// One sweep of the configured sampler.
    pub fn sweep(&mut self, model: &Model, data: &Prepared) -> Result<SweepDiagnostics> {
        match model.sampler {
            SamplerKind::WeakLimit => weak_limit::sweep(self, model, data)?,
            SamplerKind::Direct => direct::sweep(self, model, data)?,
        }
        self.sweep += 1;
        Ok(self.diagnostics(data))
    }

    pub fn diagnostics(&self, data: &Prepared) -> SweepDiagnostics {
        SweepDiagnostics {
            sweep: self.sweep,
            joint_loglik: joint_log_likelihood(self, data),
            n_states_used: states_used(&self.z),
            n_switches: count_switches(&self.z),
            hyper: self.hyper,
        }
    }

    /// Check structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let t_len = self.z.len();
        if self.w.len() != t_len {
            return Err(Error::Internal("z and w lengths differ".into()));
        }
        if t_len > 0 && self.w[0] {
            return Err(Error::Internal("w at t = 0 must be 0".into()));
        }
        for t in 0..t_len {
            if self.z[t] >= n {
                return Err(Error::Internal(format!("z[{t}] = {} exceeds {n} states", self.z[t])));
            }
            if t > 0 && self.w[t] && self.z[t] != self.z[t - 1] {
                return Err(Error::Internal(format!("w[{t}] = 1 but the state changed")));
            }
        }
        let want_beta = match self.sampler {
            SamplerKind::WeakLimit => n,
            SamplerKind::Direct => n + 1,
        };
        if self.beta.len() != want_beta || (self.beta.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::Internal("global weights are not a valid simplex".into()));
        }
        for row in &self.pi_bar {
            if row.len() != n || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(Error::Internal("transition row is not a valid simplex".into()));
            }
        }
        if self.kappa.len() != n || self.recurrence.n_states() != n {
            return Err(Error::Internal("per-state persistence arrays have the wrong length".into()));
        }
        self.hyper.validate()
    }

    /// Emission parameters (for the direct sampler these are refreshed from
    /// their posterior at the end of every sweep).
    pub fn thetas(&self) -> &[Theta] {
        self.emission.thetas()
    }
}

/// n[j][k]: transitions j → k at t ≥ 1 that did not stick.
pub fn transition_counts(z: &[usize], w: &[bool], n_states: usize) -> CountMatrix {
    let mut n = CountMatrix::zeros(n_states);
    for t in 1..z.len() {
        if !w[t] {
            n.inc(z[t - 1], z[t]);
        }
    }
    n
}

/// Per-state (sticks, switches) over indicators w_t, t ≥ 1, keyed by z_{t−1}.
pub fn stick_counts(z: &[usize], w: &[bool], n_states: usize) -> Vec<(u64, u64)> {
    let mut c = vec![(0, 0); n_states];
    for t in 1..z.len() {
        let e = &mut c[z[t - 1]];
        if w[t] {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    c
}

pub fn count_switches(z: &[usize]) -> usize {
    z.windows(2).filter(|p| p[0] != p[1]).count()
}

pub fn states_used(z: &[usize]) -> usize {
    let mut seen: Vec<usize> = z.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Σ_t ln p(y_t | θ_{z_t}, y_{t−1}) under the current assignment.
pub fn joint_log_likelihood(state: &ChainState, data: &Prepared) -> f64 {
    state
        .z
        .iter()
        .enumerate()
        .map(|(t, &j)| state.emission.log_likelihood(j, &data.design, t))
        .sum()
}
