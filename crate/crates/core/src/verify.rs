//! Correctness suites behind `rshdp verify`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{EmissionFamily, EmissionPrior, SuffStats};
use crate::error::Result;
use crate::kernels::{
    log_sum_exp, pg_mean, polya_gamma_series_moments, sample_dirichlet, sample_polya_gamma, std_normal,
    MniwParams, RngStream,
};
use crate::linalg::{Mat, Vector};
use crate::recurrence::{regression_posterior, resample_used_pg_auxiliaries, PgAuxiliaries, RecurrenceParams, RegressionInputs, KappaSchedule};
use crate::samplers::forward_backward::{backward, encode_path, enumerate_paths, sample_path, FbProblem};
use crate::samplers::geweke::{geweke_test, GewekeConfig};
use crate::samplers::{ModelVariant, Mutations, SamplerKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Pg,
    Conjugacy,
    Recurrence,
    FbOracle,
    Geweke,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pg" => Some(Suite::Pg),
            "conjugacy" => Some(Suite::Conjugacy),
            "recurrence" => Some(Suite::Recurrence),
            "fb-oracle" => Some(Suite::FbOracle),
            "geweke" => Some(Suite::Geweke),
            _ => None,
        }
    }
}

/// One measured quantity against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured < threshold`.
    pub fn below(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured < threshold,
        }
    }

    /// Passes when `measured > threshold`.
    pub fn above(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured > threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        for c in &self.checks {
            writeln!(
                f,
                "  {:<52} measured {:>12.6e}  threshold {:>10.4e}  {}",
                c.name,
                c.measured,
                c.threshold,
                if c.passed { "pass" } else { "FAIL" }
            )?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "FAILED" })
    }
}

/// Sizes and switches shared by the suites.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// PG draws per tilt.
    pub pg_draws: usize,
    pub fb_instances: usize,
    pub fb_draws: usize,
    pub geweke_samples: usize,
    pub variant: ModelVariant,
    pub sampler: SamplerKind,
    /// Also confirm that deliberately broken samplers are caught.
    pub mutations: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            pg_draws: 1_000_000,
            fb_instances: 50,
            fb_draws: 1_000_000,
            geweke_samples: 100_000,
            variant: ModelVariant::RecurrentSticky,
            sampler: SamplerKind::WeakLimit,
            mutations: false,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Report> {
    match suite {
        Suite::Pg => pg_suite(opts),
        Suite::Conjugacy => conjugacy_suite(opts),
        Suite::Recurrence => recurrence_suite(opts),
        Suite::FbOracle => fb_oracle_suite(opts),
        Suite::Geweke => geweke_suite(opts),
    }
}

pub const PG_TILTS: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
const PG_ORACLE_TERMS: usize = 100_000;

/// Exact PG(1, c) sampler against the closed-form mean (3 standard errors)
/// and the truncated-series variance (5%).
pub fn pg_suite(opts: &VerifyOptions) -> Result<Report> {
    let rows: Vec<Result<(f64, f64, f64)>> = PG_TILTS
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut rng = RngStream::new(opts.seed, 100 + i as u64);
            let n = opts.pg_draws as f64;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..opts.pg_draws {
                let x = sample_polya_gamma(c, &mut rng)?.omega;
                s += x;
                s2 += x * x;
            }
            let mean = s / n;
            let var = (s2 - n * mean * mean) / (n - 1.0);
            Ok((c, mean, var))
        })
        .collect();
    let mut checks = Vec::new();
    for row in rows {
        let (c, mean, var) = row?;
        let se = (var / opts.pg_draws as f64).sqrt();
        checks.push(Check::below(format!("mean z-score at c = {c}"), (mean - pg_mean(c)).abs() / se, 3.0));
        let (_, oracle_var) = polya_gamma_series_moments(c, PG_ORACLE_TERMS);
        checks.push(Check::below(
            format!("variance relative error at c = {c}"),
            (var / oracle_var - 1.0).abs(),
            0.05,
        ));
    }
    Ok(Report {
        suite: "pg".into(),
        checks,
    })
}

/// MNIW posterior mean against least squares on long AR data, and
/// zero-data posterior draws against prior moments.
pub fn conjugacy_suite(opts: &VerifyOptions) -> Result<Report> {
    let mut rng = RngStream::new(opts.seed, 200);
    let mut checks = Vec::new();
    let d = 2;
    let a_true = Mat::from_row_slice(d, d, &[0.9, -0.2, 0.1, 0.7]);
    let n = 100_000;
    let prior = MniwParams {
        m: Mat::zeros(d, d),
        v: Mat::identity(d, d),
        s0: Mat::identity(d, d),
        n0: d as f64 + 2.0,
    };
    let ep = EmissionPrior::new(EmissionFamily::Ar1, prior)?;
    let mut stats = SuffStats::zeros(d, d);
    let mut prev = Vector::zeros(d);
    let (mut sxx, mut syx) = (Mat::zeros(d, d), Mat::zeros(d, d));
    for _ in 0..n {
        let noise = Vector::from_fn(d, |_, _| 0.5 * std_normal(&mut rng));
        let y = &a_true * &prev + noise;
        stats.add(y.as_slice(), &prev)?;
        sxx += &prev * prev.transpose();
        syx += &y * prev.transpose();
        prev = y;
    }
    let ols = syx * sxx.try_inverse().expect("regressors span the space");
    let post = ep.posterior(&stats)?;
    checks.push(Check::below(
        "posterior mean of A vs least squares (Frobenius)",
        (&post.params.m - &ols).norm(),
        0.01,
    ));

    let prior = MniwParams {
        m: Mat::from_row_slice(d, d + 1, &[0.5, 0.0, 1.0, -0.3, 0.2, -1.0]),
        v: Mat::identity(d + 1, d + 1) * 0.5,
        s0: Mat::from_row_slice(d, d, &[2.0, 0.3, 0.3, 1.0]),
        n0: d as f64 + 7.0,
    };
    let ep = EmissionPrior::new(EmissionFamily::Ar1Affine, prior.clone())?;
    let empty = ep.posterior(&SuffStats::zeros(d, d + 1))?;
    let draws = 40_000;
    let mut a_samples = Vec::with_capacity(draws);
    let mut s_samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let th = empty.sample(&mut rng)?;
        a_samples.push(th.a().clone());
        s_samples.push(th.sigma().clone());
    }
    let sigma_mean = &prior.s0 / (prior.n0 - d as f64 - 1.0);
    let moment = |samples: &[Mat], i: usize, j: usize| {
        let xs: Vec<f64> = samples.iter().map(|m| m[(i, j)]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, (v / xs.len() as f64).sqrt())
    };
    for i in 0..d {
        for j in 0..d + 1 {
            let (m, se) = moment(&a_samples, i, j);
            checks.push(Check::below(
                format!("zero-data A[{i},{j}] mean z-score"),
                (m - prior.m[(i, j)]).abs() / se,
                3.0,
            ));
        }
        for j in 0..d {
            let (m, se) = moment(&s_samples, i, j);
            checks.push(Check::below(
                format!("zero-data Sigma[{i},{j}] mean z-score"),
                (m - sigma_mean[(i, j)]).abs() / se,
                3.0,
            ));
        }
    }
    Ok(Report {
        suite: "conjugacy".into(),
        checks,
    })
}

/// Pólya-Gamma Gibbs marginals of (R, r) against a dense-grid evaluation of
/// the exact logistic-regression posterior on a tiny instance.
pub fn recurrence_suite(opts: &VerifyOptions) -> Result<Report> {
    let mut rng = RngStream::new(opts.seed, 300);
    let u = [-1.5, -0.8, -0.3, 0.0, 0.2, 0.6, 1.1, 1.7, -1.1, 0.9, 0.4, -0.6, 1.4];
    let w_next = [true, true, false, true, false, false, false, false, true, true, false, true];
    let t_len = u.len();
    let x: Vec<f64> = u.iter().flat_map(|&v| [v, 1.0]).collect();
    let inputs = RegressionInputs::from_rows(2, x)?;
    let z = vec![0usize; t_len];
    let mut w = vec![false; t_len];
    w[1..].copy_from_slice(&w_next);
    let pv = 1.0;

    // Exact posterior on a grid.
    let n_grid = 400;
    let half = 6.0;
    let grid: Vec<f64> = (0..n_grid).map(|i| -half + 2.0 * half * (i as f64 + 0.5) / n_grid as f64).collect();
    let mut lp = Vec::with_capacity(n_grid * n_grid);
    for &a in &grid {
        for &b in &grid {
            let mut l = -0.5 * (a * a + b * b) / pv;
            for t in 0..t_len - 1 {
                let v = a * u[t] + b;
                l += if w_next[t] { crate::kernels::ln_logistic(v) } else { crate::kernels::ln_logistic(-v) };
            }
            lp.push(l);
        }
    }
    let zl = log_sum_exp(&lp);
    let mut exact = [[0.0; 2]; 2];
    for (i, &a) in grid.iter().enumerate() {
        for (j, &b) in grid.iter().enumerate() {
            let p = (lp[i * n_grid + j] - zl).exp();
            exact[0][0] += p * a;
            exact[0][1] += p * a * a;
            exact[1][0] += p * b;
            exact[1][1] += p * b * b;
        }
    }

    let iters = 200_000;
    let burn = 1_000;
    let mut params = RecurrenceParams {
        weights: vec![vec![0.0, 0.0]],
        prior_var: pv,
    };
    let mut eta = PgAuxiliaries::new(1, t_len);
    let mut acc = [[0.0; 2]; 2];
    for it in 0..iters + burn {
        resample_used_pg_auxiliaries(&mut eta, &params, &inputs, &z, &mut rng)?;
        params.weights[0] = regression_posterior(0, &inputs, &z, &w, &eta, pv).sample(&mut rng)?;
        if it >= burn {
            for k in 0..2 {
                let v = params.weights[0][k];
                acc[k][0] += v;
                acc[k][1] += v * v;
            }
        }
    }
    let mut checks = Vec::new();
    for (k, name) in ["slope R", "intercept r"].iter().enumerate() {
        let em = exact[k][0];
        let esd = (exact[k][1] - em * em).sqrt();
        let gm = acc[k][0] / iters as f64;
        let gsd = (acc[k][1] / iters as f64 - gm * gm).sqrt();
        checks.push(Check::below(format!("{name} mean error / posterior sd"), (gm - em).abs() / esd, 0.02));
        checks.push(Check::below(format!("{name} sd relative error"), (gsd / esd - 1.0).abs(), 0.02));
    }
    Ok(Report {
        suite: "recurrence".into(),
        checks,
    })
}

/// A fixed random forward-backward instance.
#[derive(Clone, Debug)]
pub struct FbInstance {
    pub initial: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub kappa: KappaSchedule,
    pub loglik: Vec<f64>,
}

impl FbInstance {
    pub fn problem(&self) -> FbProblem<'_> {
        FbProblem {
            initial: &self.initial,
            rows: &self.rows,
            kappa: &self.kappa,
            loglik: &self.loglik,
        }
    }
}

/// Instances with T in 2..=6 and L in 1..=3. Emission log-likelihoods and
/// stick probabilities are spread widely so the posterior is peaked enough
/// for a sampled histogram to resolve it.
pub fn fb_instances(n: usize, seed: u64) -> Result<Vec<FbInstance>> {
    let mut rng = RngStream::new(seed, 400);
    (0..n)
        .map(|i| {
            let t_len = 2 + i % 5;
            let l = 1 + (i / 5) % 3;
            let initial = sample_dirichlet(&vec![1.0; l], &mut rng)?;
            let rows = (0..l).map(|_| sample_dirichlet(&vec![1.0; l], &mut rng)).collect::<Result<Vec<_>>>()?;
            let kap: Vec<f64> = (0..l * t_len)
                .map(|_| {
                    let v = 4.0 * std_normal(&mut rng);
                    crate::kernels::logistic(v)
                })
                .collect();
            let kappa = KappaSchedule::from_values(l, t_len, kap)?;
            let loglik = (0..t_len * l).map(|_| 4.0 * std_normal(&mut rng)).collect();
            Ok(FbInstance {
                initial,
                rows,
                kappa,
                loglik,
            })
        })
        .collect()
}

/// (total variation of sampled paths, |message − enumeration| log-marginal).
pub fn fb_oracle_check(inst: &FbInstance, draws: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    let p = inst.problem();
    let l = inst.rows.len();
    let t_len = inst.kappa.len();
    let msg = backward(&p)?;
    let paths = enumerate_paths(&p)?;
    let lz = log_sum_exp(&paths.iter().map(|x| x.1).collect::<Vec<_>>());
    let size = (2 * l).pow(t_len as u32);
    let mut counts = vec![0u32; size];
    for _ in 0..draws {
        let (z, w) = sample_path(&p, &msg, rng)?;
        counts[encode_path(&z, &w, l)] += 1;
    }
    let mut exact = vec![0.0; size];
    for (code, lj) in &paths {
        exact[*code] = (lj - lz).exp();
    }
    let tv = 0.5
        * exact
            .iter()
            .zip(&counts)
            .map(|(p, &c)| (p - c as f64 / draws as f64).abs())
            .sum::<f64>();
    Ok((tv, (msg.log_marginal - lz).abs()))
}

pub fn fb_oracle_suite(opts: &VerifyOptions) -> Result<Report> {
    let instances = fb_instances(opts.fb_instances, opts.seed)?;
    let results: Vec<Result<(f64, f64)>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| fb_oracle_check(inst, opts.fb_draws, &mut RngStream::new(opts.seed, 500 + i as u64)))
        .collect();
    let mut checks = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (tv, dl) = r?;
        let inst = &instances[i];
        let tag = format!("instance {i} (T={}, L={})", inst.kappa.len(), inst.rows.len());
        checks.push(Check::below(format!("{tag} total variation"), tv, 0.01));
        checks.push(Check::below(format!("{tag} log-marginal error"), dl, 1e-10));
    }
    Ok(Report {
        suite: "fb-oracle".into(),
        checks,
    })
}

pub fn geweke_suite(opts: &VerifyOptions) -> Result<Report> {
    let cfg = GewekeConfig::new(opts.variant, opts.sampler, opts.geweke_samples, opts.seed);
    let report = geweke_test(&cfg)?;
    let mut checks: Vec<Check> = report
        .stats
        .iter()
        .map(|s| Check::below(format!("|z| {}", s.name), s.z.abs(), 4.0))
        .collect();
    if opts.mutations && opts.variant == ModelVariant::RecurrentSticky {
        for (name, m) in [
            (
                "skip Polya-Gamma step",
                Mutations {
                    skip_pg: true,
                    freeze_kappa: false,
                },
            ),
            (
                "skip persistence recompute",
                Mutations {
                    skip_pg: false,
                    freeze_kappa: true,
                },
            ),
        ] {
            let mut c = cfg.clone();
            c.mutations = m;
            let r = geweke_test(&c)?;
            checks.push(Check::above(format!("mutation detected: {name} (max |z|)"), r.max_abs_z(), 4.0));
        }
    }
    Ok(Report {
        suite: format!("geweke {} {}", opts.variant.name(), opts.sampler.name()),
        checks,
    })
}
