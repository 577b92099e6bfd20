use proptest::prelude::*;
use rshdp_core::bench::{evaluate, generate_hmm, HmmSpec, LabeledSequence};
use rshdp_core::config::RunConfig;
use rshdp_core::emissions::{EmissionFamily, Theta};
use rshdp_core::kernels::{ln_mvn, RngStream};
use rshdp_core::linalg::Mat;
use rshdp_core::samplers::{
    joint_log_likelihood, run_chain, states_used, transition_counts, ChainSettings, ChainSnapshot, ChainState, Model,
    ModelVariant, Prepared, SamplerKind,
};
use rshdp_core::ObservationSequence;

const VARIANTS: [ModelVariant; 4] = [
    ModelVariant::Hdp,
    ModelVariant::Sticky,
    ModelVariant::DisentangledSticky,
    ModelVariant::RecurrentSticky,
];
const SAMPLERS: [SamplerKind; 2] = [SamplerKind::WeakLimit, SamplerKind::Direct];

/// Three states with means 10 noise standard deviations apart.
fn three_state(seed: u64, t_len: usize) -> LabeledSequence {
    let spec = HmmSpec::gaussian(&[vec![0.0], vec![10.0], vec![20.0]], 1.0, 0.97).unwrap();
    generate_hmm(&spec, t_len, &mut RngStream::new(seed, 0)).unwrap()
}

fn config(variant: ModelVariant, sampler: SamplerKind, l: usize, emission: &str) -> RunConfig {
    let mut c = RunConfig::default();
    c.model = variant;
    c.sampler = sampler;
    c.truncation = l;
    c.set("emission", emission).unwrap();
    c
}

fn setup(cfg: &RunConfig, obs: &ObservationSequence) -> (Model, Prepared) {
    let model = cfg.model(obs).unwrap();
    let data = Prepared::new(&model, obs.clone()).unwrap();
    (model, data)
}

#[test]
fn recurrent_chain_recovers_well_separated_states() {
    let seq = three_state(5, 600);
    let cfg = config(ModelVariant::RecurrentSticky, SamplerKind::WeakLimit, 10, "gaussian");
    let (model, data) = setup(&cfg, &seq.observations);
    let settings = ChainSettings { iters: 500, burnin: 200, thin: 5 };
    let out = run_chain(&model, &data, settings, RngStream::new(5, 1)).unwrap();
    assert_eq!(out.samples.len(), 60);
    let mean = out.samples.iter().map(|s| evaluate(&s.z, &seq.labels).accuracy).sum::<f64>() / out.samples.len() as f64;
    assert!(mean >= 0.99, "mean saved-sample accuracy {mean}");
    assert!(evaluate(&out.modal, &seq.labels).accuracy >= 0.99);
}

#[test]
fn every_variant_and_sampler_segments_separated_data() {
    let seq = three_state(8, 300);
    for v in VARIANTS {
        for s in SAMPLERS {
            let cfg = config(v, s, 8, "gaussian");
            let (model, data) = setup(&cfg, &seq.observations);
            let settings = ChainSettings { iters: 300, burnin: 200, thin: 10 };
            let out = run_chain(&model, &data, settings, RngStream::new(8, 1)).unwrap();
            let acc = evaluate(&out.modal, &seq.labels).accuracy;
            assert!(acc >= 0.97, "{} {}: accuracy {acc}", v.name(), s.name());
        }
    }
}

#[test]
fn same_seed_gives_identical_trace() {
    let seq = three_state(2, 200);
    for s in SAMPLERS {
        let cfg = config(ModelVariant::RecurrentSticky, s, 6, "ar1");
        let (model, data) = setup(&cfg, &seq.observations);
        let settings = ChainSettings { iters: 30, burnin: 10, thin: 5 };
        let a = run_chain(&model, &data, settings, RngStream::new(4, 1)).unwrap();
        let b = run_chain(&model, &data, settings, RngStream::new(4, 1)).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.modal, b.modal);
        let c = run_chain(&model, &data, settings, RngStream::new(4, 2)).unwrap();
        assert_ne!(a.trace, c.trace);
    }
}

#[test]
fn single_state_truncation_keeps_one_state() {
    let seq = three_state(3, 150);
    let cfg = config(ModelVariant::RecurrentSticky, SamplerKind::WeakLimit, 1, "gaussian");
    let (model, data) = setup(&cfg, &seq.observations);
    let mut st = ChainState::initialize(&model, &data, RngStream::new(3, 1)).unwrap();
    for _ in 0..5 {
        let d = st.sweep(&model, &data).unwrap();
        assert!(st.z.iter().all(|&k| k == 0));
        let direct: f64 = (0..data.len()).map(|t| st.emission.log_likelihood(0, &data.design, t)).sum();
        assert_eq!(d.joint_loglik, direct);
    }
}

#[test]
fn burnin_not_before_end_is_config_error() {
    let seq = three_state(1, 50);
    let cfg = config(ModelVariant::Hdp, SamplerKind::WeakLimit, 4, "gaussian");
    let (model, data) = setup(&cfg, &seq.observations);
    let settings = ChainSettings { iters: 10, burnin: 10, thin: 1 };
    assert!(matches!(
        run_chain(&model, &data, settings, RngStream::new(0, 1)),
        Err(rshdp_core::Error::Config(_))
    ));
}

fn set_all_thetas(st: &mut ChainState, a: &Mat, sigma: &Mat) {
    for j in 0..st.n_states() {
        st.emission.set_theta(j, Theta::new(a.clone(), sigma.clone()).unwrap());
    }
}

#[test]
fn joint_loglik_doubling_sigma_on_exact_data() {
    let (d, t_len) = (2usize, 40usize);
    let obs = ObservationSequence::new(d, [1.5, -0.5].repeat(t_len)).unwrap();
    let cfg = config(ModelVariant::Hdp, SamplerKind::WeakLimit, 3, "gaussian");
    let (model, data) = setup(&cfg, &obs);
    let mut st = ChainState::initialize(&model, &data, RngStream::new(0, 1)).unwrap();
    let a = Mat::from_column_slice(2, 1, &[1.5, -0.5]);
    set_all_thetas(&mut st, &a, &Mat::identity(2, 2));
    let base = joint_log_likelihood(&st, &data);
    set_all_thetas(&mut st, &a, &(Mat::identity(2, 2) * 2.0));
    let doubled = joint_log_likelihood(&st, &data);
    let expected = (t_len * d) as f64 * 2f64.sqrt().ln();
    assert!((base - doubled - expected).abs() < 1e-10, "{} vs {expected}", base - doubled);
}

#[test]
fn joint_loglik_is_additive_over_segments() {
    let seq = three_state(6, 120);
    let cfg = config(ModelVariant::DisentangledSticky, SamplerKind::WeakLimit, 4, "gaussian");
    let (model, data) = setup(&cfg, &seq.observations);
    let mut st = ChainState::initialize(&model, &data, RngStream::new(6, 1)).unwrap();
    st.sweep(&model, &data).unwrap();
    let whole = joint_log_likelihood(&st, &data);
    let mut parts = 0.0;
    for (lo, hi) in [(0, 50), (50, 120)] {
        let piece = Prepared::new(&model, seq.observations.slice(lo, hi)).unwrap();
        let mut sub = st.clone();
        sub.z = st.z[lo..hi].to_vec();
        parts += joint_log_likelihood(&sub, &piece);
    }
    assert!((whole - parts).abs() < 1e-9, "{whole} vs {parts}");
}

#[test]
fn joint_loglik_matches_density_reimplementation() {
    let seq = three_state(9, 80);
    let cfg = config(ModelVariant::RecurrentSticky, SamplerKind::WeakLimit, 4, "ar1-affine");
    let (model, data) = setup(&cfg, &seq.observations);
    let mut st = ChainState::initialize(&model, &data, RngStream::new(9, 1)).unwrap();
    st.sweep(&model, &data).unwrap();
    let obs = &seq.observations;
    let mut total = model.emission_prior.anchor_log_likelihood(obs.row(0));
    for t in 1..obs.len() {
        let th = st.emission.theta(st.z[t]);
        let x = EmissionFamily::Ar1Affine.regressor(obs, t).unwrap();
        let mean = th.a() * x;
        total += ln_mvn(obs.row(t), mean.as_slice(), th.sigma()).unwrap();
    }
    let ll = joint_log_likelihood(&st, &data);
    assert!((ll - total).abs() < 1e-10, "{ll} vs {total}");
}

#[test]
fn snapshot_restore_continues_identically() {
    let seq = three_state(4, 150);
    for v in VARIANTS {
        for s in SAMPLERS {
            let cfg = config(v, s, 5, "ar1");
            let (model, data) = setup(&cfg, &seq.observations);
            let mut st = ChainState::initialize(&model, &data, RngStream::new(4, 1)).unwrap();
            for _ in 0..4 {
                st.sweep(&model, &data).unwrap();
            }
            let snap = ChainSnapshot::capture(&st);
            let text = snap.to_json().unwrap();
            let back = ChainSnapshot::from_json(&text).unwrap();
            assert_eq!(back.to_json().unwrap(), text);
            let mut restored = back.restore(&model, &data).unwrap();
            for _ in 0..3 {
                let a = st.sweep(&model, &data).unwrap();
                let b = restored.sweep(&model, &data).unwrap();
                assert_eq!(a, b, "{} {}", v.name(), s.name());
            }
            assert_eq!(st.z, restored.z);
        }
    }
}

#[test]
fn snapshot_rejects_other_versions() {
    let seq = three_state(4, 40);
    let cfg = config(ModelVariant::Hdp, SamplerKind::WeakLimit, 3, "gaussian");
    let (model, data) = setup(&cfg, &seq.observations);
    let st = ChainState::initialize(&model, &data, RngStream::new(4, 1)).unwrap();
    let text = ChainSnapshot::capture(&st).to_json().unwrap();
    let bumped = text.replacen("\"version\": 1", "\"version\": 99", 1);
    assert_ne!(bumped, text);
    assert!(ChainSnapshot::from_json(&bumped).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn sweep_invariants_hold(seed in 0u64..10_000, vi in 0usize..4, si in 0usize..2, l in 1usize..6) {
        let seq = three_state(seed, 60);
        let cfg = config(VARIANTS[vi], SAMPLERS[si], l, "ar1");
        let (model, data) = setup(&cfg, &seq.observations);
        let mut st = ChainState::initialize(&model, &data, RngStream::new(seed, 1)).unwrap();
        for _ in 0..4 {
            let d = st.sweep(&model, &data).unwrap();
            st.validate().unwrap();
            prop_assert!(!st.w[0]);
            for t in 1..st.z.len() {
                prop_assert!(!st.w[t] || st.z[t] == st.z[t - 1]);
            }
            if VARIANTS[vi] == ModelVariant::Hdp || VARIANTS[vi] == ModelVariant::Sticky {
                prop_assert!(st.w.iter().all(|w| !w));
            }
            let n = transition_counts(&st.z, &st.w, st.n_states());
            let sticks = st.w.iter().filter(|w| **w).count() as u64;
            prop_assert_eq!(n.total() + sticks, (st.z.len() - 1) as u64);
            prop_assert_eq!(d.n_states_used, states_used(&st.z));
            if SAMPLERS[si] == SamplerKind::WeakLimit {
                prop_assert!(d.n_states_used <= l);
            }
            prop_assert!(d.joint_loglik.is_finite());
        }
    }
}
