use std::path::Path;
use std::process::{Command, Output};

fn rshdp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rshdp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("rshdp runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = rshdp(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn hmm(cwd: &Path, t: &str, out: &str) {
    ok(&["generate", "hmm", "--T", t, "--states", "2", "--spacing", "8", "--seed", "3", "--out", out], cwd);
}

fn fit(cwd: &Path, data: &str, model: &str, out: &str, extra: &[&str]) {
    let mut args = vec![
        "fit", "--data", data, "--model", model, "--iters", "40", "--burnin", "20", "--thin", "5", "--seed", "2", "--out",
        out,
    ];
    args.extend_from_slice(extra);
    ok(&args, cwd);
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn generate_hmm_writes_labeled_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "hmm", "--T", "1000", "--seed", "1", "--out", "h.csv"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dim0,label"));
    assert_eq!(lines.count(), 1000);
    let manifest = std::fs::read_to_string(dir.path().join("h.manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 1"), "{manifest}");
}

#[test]
fn invalid_flag_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = rshdp(&["fit", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn burnin_past_iterations_is_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "100", "d.csv");
    let out = rshdp(&["fit", "--data", "d.csv", "--iters", "100", "--burnin", "500", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("run").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("burn-in"));
}

#[test]
fn missing_data_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rshdp(&["fit", "--data", "absent.csv", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn weak_limit_fit_respects_truncation_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "200", "d.csv");
    fit(dir.path(), "d.csv", "hdp", "run", &["-L", "3"]);
    let trace = std::fs::read_to_string(dir.path().join("run/loglik_trace.csv")).unwrap();
    let rows = csv_rows(&trace);
    assert_eq!(rows[0], ["sweep", "joint_loglik", "n_states", "n_switches"]);
    assert_eq!(rows.len(), 41);
    for r in &rows[1..] {
        assert!(r[2].parse::<usize>().unwrap() <= 3);
        assert!(r[1].parse::<f64>().unwrap().is_finite());
    }
    let samples = std::fs::read_dir(dir.path().join("run/samples")).unwrap().count();
    assert_eq!(samples, 4);
    let modal = std::fs::read_to_string(dir.path().join("run/modal_states.csv")).unwrap();
    assert_eq!(modal.lines().count(), 201);
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "150", "d.csv");
    fit(dir.path(), "d.csv", "hdp", "run", &["-L", "2"]);
    let labels = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut modal = String::from("t,state\n");
    for (t, line) in labels.lines().skip(1).enumerate() {
        modal.push_str(&format!("{t},{}\n", line.rsplit(',').next().unwrap()));
    }
    std::fs::write(dir.path().join("run/modal_states.csv"), modal).unwrap();
    let text = ok(&["eval", "run", "--truth", "d.csv"], dir.path());
    let rows = csv_rows(&text);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    assert_eq!(rows[1][col("accuracy")].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][col("weighted_f1")].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn eval_with_mismatched_lengths_names_both() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "120", "d.csv");
    hmm(dir.path(), "90", "short.csv");
    fit(dir.path(), "d.csv", "hdp", "run", &["-L", "2"]);
    let out = rshdp(&["eval", "run", "--truth", "short.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("120") && err.contains("90"), "{err}");
}

#[test]
fn eval_scores_every_model_on_one_dataset() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "150", "d.csv");
    let models = ["hdp", "s-hdp", "ds-hdp", "rs-hdp"];
    for m in models {
        fit(dir.path(), "d.csv", m, m, &["-L", "4"]);
    }
    let mut args = vec!["eval"];
    args.extend_from_slice(&models);
    args.extend_from_slice(&["--truth", "d.csv", "--out", "scores.csv"]);
    ok(&args, dir.path());
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("scores.csv")).unwrap());
    assert_eq!(rows.len(), 5);
    let model = rows[0].iter().position(|h| h == "model").unwrap();
    let hash = rows[0].iter().position(|h| h == "dataset_hash").unwrap();
    let names: Vec<&str> = rows[1..].iter().map(|r| r[model].as_str()).collect();
    assert_eq!(names, models);
    assert!(rows[1..].iter().all(|r| r[hash] == rows[1][hash] && r[hash].len() == 64));
}

#[test]
fn config_file_and_overrides_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "100", "d.csv");
    std::fs::write(
        dir.path().join("run.toml"),
        "model = \"s-hdp\"\ntruncation = 5\n[priors.gamma]\nshape = 3.0\n",
    )
    .unwrap();
    ok(
        &[
            "fit", "--data", "d.csv", "--config", "run.toml", "--set", "priors.gamma.rate=2", "--iters", "20", "--burnin",
            "10", "--out", "run",
        ],
        dir.path(),
    );
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
    for needle in ["\"model\": \"s-hdp\"", "\"truncation\": \"5\"", "\"priors.gamma.shape\": \"3", "\"priors.gamma.rate\": \"2"] {
        assert!(manifest.contains(needle), "{needle} missing from {manifest}");
    }
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "50", "d.csv");
    let out = rshdp(&["fit", "--data", "d.csv", "--set", "priors.nope=1", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chains_get_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    hmm(dir.path(), "80", "d.csv");
    fit(dir.path(), "d.csv", "rs-hdp", "run", &["--chains", "2", "-L", "3"]);
    let a = std::fs::read(dir.path().join("run/chain-0/loglik_trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("run/chain-1/loglik_trace.csv")).unwrap();
    assert_ne!(a, b);
    let text = ok(&["eval", "run", "--truth", "d.csv"], dir.path());
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verify_suites_report_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = rshdp(&["verify", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let text = ok(&["verify", "pg", "--pg-draws", "20000"], dir.path());
    assert!(text.to_lowercase().contains("pass"), "{text}");
}

#[test]
fn defaults_lists_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["defaults"], dir.path());
    for key in ["model", "truncation", "priors.alpha.shape", "priors.rho.phi_cells", "priors.kappa_initial"] {
        assert!(text.contains(key), "{key}");
    }
}
