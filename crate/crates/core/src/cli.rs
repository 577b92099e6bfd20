//! Command-line front end: generate data, fit models, evaluate runs and run
//! the verification suites.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{evaluate, generate_hmm, generate_nascar, load_bee, read_labels, read_sequence, write_labeled, HmmSpec, LabeledSequence, NascarConfig};
use crate::config::{RunConfig, DEFAULTS};
use crate::data::ObservationSequence;
use crate::error::{Error, Result};
use crate::kernels::RngStream;
use crate::samplers::{run_chain, ChainOutput, ChainSnapshot, ModelVariant, Prepared, SamplerKind};
use crate::verify::{run_suite, Suite, VerifyOptions};

pub const TRACE_FILE: &str = "loglik_trace.csv";
pub const MODAL_FILE: &str = "modal_states.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Parser, Debug)]
#[command(name = "rshdp", version, about = "Bayesian nonparametric time-series segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic labeled sequence as CSV plus a manifest.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Run one or more chains and write a run directory.
    Fit(FitArgs),
    /// Score run directories against ground-truth labels.
    Eval(EvalArgs),
    /// Run a verification suite; exits 4 if any check fails.
    Verify(VerifyArgs),
    /// Print the configuration defaults table as TOML.
    Defaults,
}

#[derive(Subcommand, Debug)]
pub enum GenerateKind {
    /// Car lapping an oval track; labels are the four track segments.
    Nascar(NascarArgs),
    /// Gaussian HMM with evenly spaced state means.
    Hmm(HmmArgs),
}

#[derive(Args, Debug)]
pub struct NascarArgs {
    #[arg(long, default_value_t = 20)]
    pub laps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    /// Speeds on the bottom straight, right turn, top straight and left turn.
    #[arg(long, num_args = 4, value_delimiter = ',', default_values_t = [1.0, 1.5, 0.75, 1.25])]
    pub speeds: Vec<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub straight: f64,
    #[arg(long, default_value_t = 5.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HmmArgs {
    #[arg(long, default_value_t = 3)]
    pub states: usize,
    #[arg(long = "T", default_value_t = 1000)]
    pub t_len: usize,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Distance between consecutive state means.
    #[arg(long, default_value_t = 4.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sd: f64,
    /// Self-transition probability.
    #[arg(long, default_value_t = 0.95)]
    pub stay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Columns dim0.. and an optional label column.
    Csv,
    /// Dancing-bee tracks: t, x, y, theta and label.
    Bee,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Observation CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub format: DataFormat,
    /// TOML configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub emission: Option<String>,
    #[arg(long = "truncation", short = 'L')]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Override any configuration key, e.g. --set priors.alpha.shape=2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directories; directories holding chain-* subdirectories expand to every chain.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Ground-truth CSV with a label column.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    pub truth_format: DataFormat,
    /// Scores CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// pg, conjugacy, recurrence, fb-oracle or geweke.
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "rs-hdp")]
    pub model: String,
    #[arg(long, default_value = "weak-limit")]
    pub sampler: String,
    /// PG draws per tilt.
    #[arg(long, default_value_t = 1_000_000)]
    pub pg_draws: usize,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    /// Forward-backward draws per instance.
    #[arg(long, default_value_t = 1_000_000)]
    pub fb_draws: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Also check that deliberately broken samplers are detected.
    #[arg(long)]
    pub mutations: bool,
}

/// Content hash of a byte string in the form used by git blob ids, but with SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub format: DataFormat,
    pub hash: String,
    pub rows: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub tool: String,
    pub version: String,
    pub generator: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub output: String,
    pub output_hash: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub tool: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub input: InputRecord,
    pub chain: usize,
    pub rng_stream: u64,
    pub samples: usize,
    pub final_states: usize,
}

fn manifest_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

pub fn cmd_generate(kind: &GenerateKind) -> Result<GenerateManifest> {
    let (seq, out, name, seed, params) = match kind {
        GenerateKind::Nascar(a) => {
            let speeds: [f64; 4] = a
                .speeds
                .as_slice()
                .try_into()
                .map_err(|_| Error::Config("--speeds needs exactly four values".into()))?;
            let cfg = NascarConfig {
                laps: a.laps,
                speeds,
                noise_sd: a.noise_sd,
                straight: a.straight,
                radius: a.radius,
                dt: a.dt,
            };
            let seq = generate_nascar(&cfg, &mut RngStream::new(a.seed, 0))?;
            let params = BTreeMap::from([
                ("laps".into(), a.laps.to_string()),
                ("noise_sd".into(), a.noise_sd.to_string()),
                ("speeds".into(), format!("{:?}", a.speeds)),
                ("straight".into(), a.straight.to_string()),
                ("radius".into(), a.radius.to_string()),
                ("dt".into(), a.dt.to_string()),
            ]);
            (seq, &a.out, "nascar", a.seed, params)
        }
        GenerateKind::Hmm(a) => {
            if a.states == 0 || a.dim == 0 || a.t_len == 0 {
                return Err(Error::Config("--states, --dim and --T must be positive".into()));
            }
            let means: Vec<Vec<f64>> = (0..a.states).map(|k| vec![a.spacing * k as f64; a.dim]).collect();
            let spec = HmmSpec::gaussian(&means, a.sd, a.stay)?;
            let seq = generate_hmm(&spec, a.t_len, &mut RngStream::new(a.seed, 0))?;
            let params = BTreeMap::from([
                ("states".into(), a.states.to_string()),
                ("T".into(), a.t_len.to_string()),
                ("dim".into(), a.dim.to_string()),
                ("spacing".into(), a.spacing.to_string()),
                ("sd".into(), a.sd.to_string()),
                ("stay".into(), a.stay.to_string()),
            ]);
            (seq, &a.out, "hmm", a.seed, params)
        }
    };
    write_labeled(out, &seq)?;
    let manifest = GenerateManifest {
        tool: "rshdp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generator: name.into(),
        params,
        seed,
        output: out.display().to_string(),
        output_hash: file_hash(out)?,
        rows: seq.len(),
    };
    write_file(&manifest_path_for(out), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(manifest)
}

/// Observations and optional labels from a data file.
pub fn load_data(path: &Path, format: DataFormat) -> Result<(ObservationSequence, Option<Vec<usize>>)> {
    match format {
        DataFormat::Csv => read_sequence(path),
        DataFormat::Bee => {
            let LabeledSequence { observations, labels, .. } = load_bee(path)?;
            Ok((observations, Some(labels)))
        }
    }
}

/// Configuration from defaults, then the file, then flags, then --set pairs.
pub fn resolve_config(args: &FitArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("model", args.model.clone()),
        ("sampler", args.sampler.clone()),
        ("emission", args.emission.clone()),
        ("truncation", args.truncation.map(|v| v.to_string())),
        ("iters", args.iters.map(|v| v.to_string())),
        ("burnin", args.burnin.map(|v| v.to_string())),
        ("thin", args.thin.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("chains", args.chains.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn trace_csv(out: &ChainOutput) -> String {
    let mut s = String::from("sweep,joint_loglik,n_states,n_switches\n");
    for d in &out.trace {
        let _ = writeln!(s, "{},{:?},{},{}", d.sweep, d.joint_loglik, d.n_states_used, d.n_switches);
    }
    s
}

fn states_csv(z: &[usize]) -> String {
    let mut s = String::from("t,state\n");
    for (t, k) in z.iter().enumerate() {
        let _ = writeln!(s, "{t},{k}");
    }
    s
}

fn write_run(dir: &Path, out: &ChainOutput, manifest: &FitManifest) -> Result<()> {
    write_file(&dir.join(TRACE_FILE), &trace_csv(out))?;
    write_file(&dir.join(MODAL_FILE), &states_csv(&out.modal))?;
    let samples = dir.join(SAMPLES_DIR);
    fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;
    for snap in &out.samples {
        write_file(&samples.join(format!("sweep-{:06}.json", snap.sweep)), &snap.to_json()?)?;
    }
    write_file(&dir.join(MANIFEST_FILE), &(serde_json::to_string_pretty(manifest)? + "\n"))
}

/// Fit every chain and write its run directory. One chain writes straight
/// into `out`; several chains write to `out/chain-{i}`. Chain i draws from
/// RNG stream i + 1 of the configured seed.
pub fn cmd_fit(args: &FitArgs) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(args)?;
    let (obs, _) = load_data(&args.data, args.format)?;
    let input = InputRecord {
        path: args.data.display().to_string(),
        format: args.format,
        hash: file_hash(&args.data)?,
        rows: obs.len(),
        dim: obs.dim(),
    };
    let model = cfg.model(&obs)?;
    let data = Prepared::new(&model, obs)?;
    let dirs: Vec<PathBuf> = if cfg.chains == 1 {
        vec![args.out.clone()]
    } else {
        (0..cfg.chains).map(|i| args.out.join(format!("chain-{i}"))).collect()
    };
    dirs.par_iter()
        .enumerate()
        .map(|(i, dir)| {
            let stream = i as u64 + 1;
            let out = run_chain(&model, &data, cfg.chain_settings(), RngStream::new(cfg.seed, stream))?;
            let manifest = FitManifest {
                tool: "rshdp".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config: cfg.flat(),
                input: input.clone(),
                chain: i,
                rng_stream: stream,
                samples: out.samples.len(),
                final_states: out.final_state.n_states(),
            };
            write_run(dir, &out, &manifest)
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(dirs)
}

/// One row of the scores table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub run: String,
    pub model: String,
    pub sampler: String,
    pub dataset_hash: String,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub n_switches: usize,
    /// Predicted label to true label, `-` when unmatched, joined by `;`.
    pub matching: String,
    pub n_samples: usize,
    pub sample_f1_mean: f64,
    pub sample_f1_sd: f64,
    pub sample_accuracy_mean: f64,
    pub sample_accuracy_sd: f64,
}

/// Run directories named on the command line, expanding chain-* children.
pub fn expand_runs(runs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for r in runs {
        if r.join(MANIFEST_FILE).is_file() {
            out.push(r.clone());
            continue;
        }
        let mut chains: Vec<PathBuf> = fs::read_dir(r)
            .map_err(|e| Error::io(r, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        if chains.is_empty() {
            return Err(Error::Data(format!("{} is not a run directory", r.display())));
        }
        chains.sort();
        out.extend(chains);
    }
    Ok(out)
}

fn read_states(path: &Path) -> Result<Vec<usize>> {
    read_labels(path, "state")
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v.sqrt())
}

fn check_lengths(what: &Path, predicted: usize, truth: usize) -> Result<()> {
    if predicted != truth {
        return Err(Error::Data(format!(
            "{} has {predicted} timesteps but the ground truth has {truth}",
            what.display()
        )));
    }
    Ok(())
}

pub fn score_run(dir: &Path, truth: &[usize]) -> Result<ScoreRow> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: FitManifest = serde_json::from_str(&text)?;
    let modal_path = dir.join(MODAL_FILE);
    let modal = read_states(&modal_path)?;
    check_lengths(&modal_path, modal.len(), truth.len())?;
    let s = evaluate(&modal, truth);
    let mut f1 = Vec::new();
    let mut acc = Vec::new();
    let sdir = dir.join(SAMPLES_DIR);
    if sdir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&sdir)
            .map_err(|e| Error::io(&sdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            let snap = ChainSnapshot::from_json(&fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?)?;
            check_lengths(&f, snap.z.len(), truth.len())?;
            let e = evaluate(&snap.z, truth);
            f1.push(e.weighted_f1);
            acc.push(e.accuracy);
        }
    }
    let matching = s
        .matching
        .iter()
        .map(|m| m.map_or("-".to_string(), |v| v.to_string()))
        .collect::<Vec<_>>()
        .join(";");
    let (f1_mean, f1_sd) = mean_sd(&f1);
    let (acc_mean, acc_sd) = mean_sd(&acc);
    let get = |k: &str| manifest.config.get(k).cloned().unwrap_or_default();
    Ok(ScoreRow {
        run: dir.display().to_string(),
        model: get("model"),
        sampler: get("sampler"),
        dataset_hash: manifest.input.hash.clone(),
        accuracy: s.accuracy,
        weighted_f1: s.weighted_f1,
        n_switches: s.n_switches,
        matching,
        n_samples: f1.len(),
        sample_f1_mean: f1_mean,
        sample_f1_sd: f1_sd,
        sample_accuracy_mean: acc_mean,
        sample_accuracy_sd: acc_sd,
    })
}

pub fn scores_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(format!("scores table: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("scores table: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<ScoreRow>> {
    let truth = match args.truth_format {
        DataFormat::Csv => read_labels(&args.truth, "label")?,
        DataFormat::Bee => load_bee(&args.truth)?.labels,
    };
    let rows = expand_runs(&args.runs)?
        .iter()
        .map(|d| score_run(d, &truth))
        .collect::<Result<Vec<_>>>()?;
    let text = scores_csv(&rows)?;
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(rows)
}

pub fn verify_options(args: &VerifyArgs) -> Result<VerifyOptions> {
    Ok(VerifyOptions {
        seed: args.seed,
        pg_draws: args.pg_draws,
        fb_instances: args.instances,
        fb_draws: args.fb_draws,
        geweke_samples: args.samples,
        variant: ModelVariant::parse(&args.model)
            .ok_or_else(|| Error::Config(format!("unknown model {:?}", args.model)))?,
        sampler: SamplerKind::parse(&args.sampler)
            .ok_or_else(|| Error::Config(format!("unknown sampler {:?}", args.sampler)))?,
        mutations: args.mutations,
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let suite = Suite::parse(&args.suite).ok_or_else(|| {
        Error::Config(format!(
            "unknown suite {:?}; expected pg, conjugacy, recurrence, fb-oracle or geweke",
            args.suite
        ))
    })?;
    let report = run_suite(suite, &verify_options(args)?)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Error::Verification(format!("{} failed: {}", report.suite, failed.join(", "))))
    }
}

fn defaults_text() -> String {
    let mut s = String::new();
    for (k, v, note) in DEFAULTS {
        let _ = writeln!(s, "# {note}");
        let quoted = if v.parse::<f64>().is_ok() || *v == "true" || *v == "false" { v.to_string() } else { format!("\"{v}\"") };
        let _ = writeln!(s, "{k} = {quoted}");
    }
    s
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { kind } => {
            let m = cmd_generate(&kind)?;
            eprintln!("wrote {} rows to {}", m.rows, m.output);
        }
        Command::Fit(a) => {
            for d in cmd_fit(&a)? {
                eprintln!("wrote {}", d.display());
            }
        }
        Command::Eval(a) => {
            cmd_eval(&a)?;
        }
        Command::Verify(a) => cmd_verify(&a)?,
        Command::Defaults => print!("{}", defaults_text()),
    }
    Ok(())
}

/// Parse arguments, run, and map errors to exit codes.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_matches_git_blob_framing() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_text_parses_back() {
        let mut c = RunConfig::default();
        c.apply_toml(&defaults_text()).unwrap();
        assert_eq!(c, RunConfig::default());
    }
}
