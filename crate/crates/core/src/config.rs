//! Run configuration: one flat table of dotted keys with defaults, read from
//! a TOML file and overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ObservationSequence;
use crate::emissions::{default_prior, EmissionFamily, EmissionPrior, DEFAULT_S0_FACTOR};
use crate::error::{Error, Result};
use crate::hdp::GammaPrior;
use crate::recurrence::RegressionInput;
use crate::samplers::{ChainSettings, KappaInitialUpdate, Model, ModelVariant, Priors, SamplerKind};

/// Every key with its default value and meaning.
pub const DEFAULTS: &[(&str, &str, &str)] = &[
    ("model", "rs-hdp", "hdp | s-hdp | ds-hdp | rs-hdp"),
    ("sampler", "weak-limit", "weak-limit | direct"),
    ("emission", "ar1-affine", "gaussian | ar1 | ar1-affine"),
    ("truncation", "20", "weak-limit state bound L; unused by direct"),
    ("iters", "500", "total sweeps"),
    ("burnin", "200", "sweeps discarded before saving samples"),
    ("thin", "5", "save every thin-th sweep after burn-in"),
    ("seed", "0", "root seed"),
    ("chains", "1", "independent chains run in parallel"),
    ("priors.alpha.shape", "1", "Gamma prior on α (α + κ for s-hdp)"),
    ("priors.alpha.rate", "0.01", ""),
    ("priors.gamma.shape", "2", "Gamma prior on γ"),
    ("priors.gamma.rate", "1", ""),
    ("priors.rho.phi_cells", "100", "uniform grid over φ = ρ₁/(ρ₁+ρ₂)"),
    ("priors.rho.eta_cells", "100", "uniform grid over η = (ρ₁+ρ₂)^(−1/3)"),
    ("priors.sticky_ratio_cells", "100", "uniform grid over κ/(α+κ) for s-hdp"),
    ("priors.recurrence.prior_var", "0.0001", "N(0, v·I) prior on (R_j, r_j)"),
    ("priors.recurrence.input", "raw", "raw | first-difference"),
    ("priors.recurrence.standardize", "false", "z-score regression inputs"),
    ("priors.kappa_initial", "exact", "exact | stick-counts"),
    ("priors.concentration_iters", "1", "auxiliary rounds per α/γ update"),
    ("priors.emission.s0_factor", "0.4", "S₀ = factor · covariance of first differences"),
    ("priors.emission.kappa0", "0.05", "mean-prior precision multiplier for gaussian emissions"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelVariant,
    pub sampler: SamplerKind,
    pub emission: EmissionFamily,
    pub truncation: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub alpha: (f64, f64),
    pub gamma: (f64, f64),
    pub rho_cells: (usize, usize),
    pub sticky_ratio_cells: usize,
    pub recurrence_prior_var: f64,
    pub regression_input: RegressionInput,
    pub standardize_inputs: bool,
    pub kappa_initial: KappaInitialUpdate,
    pub concentration_iters: usize,
    pub s0_factor: f64,
    pub kappa0: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            model: ModelVariant::RecurrentSticky,
            sampler: SamplerKind::WeakLimit,
            emission: EmissionFamily::Ar1Affine,
            truncation: 0,
            iters: 0,
            burnin: 0,
            thin: 0,
            seed: 0,
            chains: 0,
            alpha: (0.0, 0.0),
            gamma: (0.0, 0.0),
            rho_cells: (0, 0),
            sticky_ratio_cells: 0,
            recurrence_prior_var: 0.0,
            regression_input: RegressionInput::Raw,
            standardize_inputs: false,
            kappa_initial: KappaInitialUpdate::Exact,
            concentration_iters: 0,
            s0_factor: 0.0,
            kappa0: 0.0,
        };
        for (k, v, _) in DEFAULTS {
            c.set(k, v).expect("defaults parse");
        }
        c
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(n, _)| *n == value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("{key}: {value:?} is not one of {}", names.join(", ")))
    })
}

/// Flatten nested TOML tables into dotted keys with string values.
fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out)?,
            toml::Value::String(s) => out.push((key, s.clone())),
            toml::Value::Integer(i) => out.push((key, i.to_string())),
            toml::Value::Float(f) => out.push((key, f.to_string())),
            toml::Value::Boolean(b) => out.push((key, b.to_string())),
            other => return Err(Error::Config(format!("{key}: unsupported value {other}"))),
        }
    }
    Ok(())
}

impl RunConfig {
    /// Set one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model" => {
                self.model = ModelVariant::parse(value)
                    .ok_or_else(|| Error::Config(format!("model: unknown variant {value:?}")))?
            }
            "sampler" => {
                self.sampler = SamplerKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("sampler: unknown sampler {value:?}")))?
            }
            "emission" => {
                self.emission = choice(
                    key,
                    value,
                    &[
                        ("gaussian", EmissionFamily::Gaussian),
                        ("ar1", EmissionFamily::Ar1),
                        ("ar1-affine", EmissionFamily::Ar1Affine),
                    ],
                )?
            }
            "truncation" => self.truncation = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "burnin" => self.burnin = parse(key, value)?,
            "thin" => self.thin = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "chains" => self.chains = parse(key, value)?,
            "priors.alpha.shape" => self.alpha.0 = parse(key, value)?,
            "priors.alpha.rate" => self.alpha.1 = parse(key, value)?,
            "priors.gamma.shape" => self.gamma.0 = parse(key, value)?,
            "priors.gamma.rate" => self.gamma.1 = parse(key, value)?,
            "priors.rho.phi_cells" => self.rho_cells.0 = parse(key, value)?,
            "priors.rho.eta_cells" => self.rho_cells.1 = parse(key, value)?,
            "priors.sticky_ratio_cells" => self.sticky_ratio_cells = parse(key, value)?,
            "priors.recurrence.prior_var" => self.recurrence_prior_var = parse(key, value)?,
            "priors.recurrence.input" => {
                self.regression_input = choice(
                    key,
                    value,
                    &[
                        ("raw", RegressionInput::Raw),
                        ("first-difference", RegressionInput::FirstDifference),
                    ],
                )?
            }
            "priors.recurrence.standardize" => self.standardize_inputs = parse_bool(key, value)?,
            "priors.kappa_initial" => {
                self.kappa_initial = choice(
                    key,
                    value,
                    &[
                        ("exact", KappaInitialUpdate::Exact),
                        ("stick-counts", KappaInitialUpdate::StickCounts),
                    ],
                )?
            }
            "priors.concentration_iters" => self.concentration_iters = parse(key, value)?,
            "priors.emission.s0_factor" => self.s0_factor = parse(key, value)?,
            "priors.emission.kappa0" => self.kappa0 = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let kappa_initial = match self.kappa_initial {
            KappaInitialUpdate::Exact => "exact",
            KappaInitialUpdate::StickCounts => "stick-counts",
        };
        let input = match self.regression_input {
            RegressionInput::Raw => "raw",
            RegressionInput::FirstDifference => "first-difference",
        };
        let emission = match self.emission {
            EmissionFamily::Gaussian => "gaussian",
            EmissionFamily::Ar1 => "ar1",
            EmissionFamily::Ar1Affine => "ar1-affine",
        };
        Some(match key {
            "model" => self.model.name().into(),
            "sampler" => self.sampler.name().into(),
            "emission" => emission.into(),
            "truncation" => self.truncation.to_string(),
            "iters" => self.iters.to_string(),
            "burnin" => self.burnin.to_string(),
            "thin" => self.thin.to_string(),
            "seed" => self.seed.to_string(),
            "chains" => self.chains.to_string(),
            "priors.alpha.shape" => self.alpha.0.to_string(),
            "priors.alpha.rate" => self.alpha.1.to_string(),
            "priors.gamma.shape" => self.gamma.0.to_string(),
            "priors.gamma.rate" => self.gamma.1.to_string(),
            "priors.rho.phi_cells" => self.rho_cells.0.to_string(),
            "priors.rho.eta_cells" => self.rho_cells.1.to_string(),
            "priors.sticky_ratio_cells" => self.sticky_ratio_cells.to_string(),
            "priors.recurrence.prior_var" => self.recurrence_prior_var.to_string(),
            "priors.recurrence.input" => input.into(),
            "priors.recurrence.standardize" => self.standardize_inputs.to_string(),
            "priors.kappa_initial" => kappa_initial.into(),
            "priors.concentration_iters" => self.concentration_iters.to_string(),
            "priors.emission.s0_factor" => self.s0_factor.to_string(),
            "priors.emission.kappa0" => self.kappa0.to_string(),
            _ => return None,
        })
    }

    /// Apply every key of a TOML document (nested tables or dotted keys).
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("configuration file: {e}")))?;
        let mut pairs = Vec::new();
        flatten("", &table, &mut pairs)?;
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_toml(&text)?;
        Ok(c)
    }

    /// Resolved values of every key.
    pub fn flat(&self) -> BTreeMap<String, String> {
        DEFAULTS
            .iter()
            .map(|(k, _, _)| (k.to_string(), self.get(k).expect("every default key is readable")))
            .collect()
    }

    /// TOML rendering with one dotted key per line.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (k, _, note) in DEFAULTS {
            let v = self.get(k).expect("every default key is readable");
            let quoted = if v.parse::<f64>().is_ok() || v == "true" || v == "false" {
                v
            } else {
                format!("\"{v}\"")
            };
            if note.is_empty() {
                out.push_str(&format!("{k} = {quoted}\n"));
            } else {
                out.push_str(&format!("{k} = {quoted}  # {note}\n"));
            }
        }
        out
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain_settings().validate()?;
        if self.sampler == SamplerKind::WeakLimit && self.truncation == 0 {
            return Err(Error::Config("truncation must be at least 1 for the weak-limit sampler".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(self.s0_factor > 0.0) || !(self.kappa0 > 0.0) {
            return Err(Error::Config("emission prior scales must be positive".into()));
        }
        Ok(())
    }

    pub fn priors(&self) -> Priors {
        Priors {
            alpha: GammaPrior::new(self.alpha.0, self.alpha.1),
            gamma: GammaPrior::new(self.gamma.0, self.gamma.1),
            rho_grid: self.rho_cells,
            sticky_ratio_cells: self.sticky_ratio_cells,
            recurrence_prior_var: self.recurrence_prior_var,
            regression_input: self.regression_input,
            standardize_inputs: self.standardize_inputs,
            kappa_initial: self.kappa_initial,
            concentration_iters: self.concentration_iters,
        }
    }

    /// Emission prior from data-driven defaults.
    pub fn emission_prior(&self, obs: &ObservationSequence) -> Result<EmissionPrior> {
        let mut params = default_prior(self.emission, obs, self.kappa0).map_err(|e| match e {
            Error::Input(m) => Error::Data(m),
            other => other,
        })?;
        params.s0 *= self.s0_factor / DEFAULT_S0_FACTOR;
        EmissionPrior::new(self.emission, params)
    }

    pub fn model(&self, obs: &ObservationSequence) -> Result<Model> {
        self.validate()?;
        Model::new(self.model, self.sampler, self.truncation, self.priors(), self.emission_prior(obs)?)
    }
}
