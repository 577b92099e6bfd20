//! Fit each model to one simulated oval track and print its scores.
//!
//! cargo run --release --example segment_nascar -- [seed] [iters]

use rshdp_core::bench::{evaluate, generate_nascar, NascarConfig};
use rshdp_core::config::RunConfig;
use rshdp_core::kernels::RngStream;
use rshdp_core::samplers::{run_chain, Prepared};

fn main() -> rshdp_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let iters: usize = args.next().map_or(500, |s| s.parse().expect("iters"));
    let seq = generate_nascar(&NascarConfig::default(), &mut RngStream::new(seed, 0))?;
    println!("T = {}", seq.len());
    for model in ["rs-hdp", "ds-hdp", "s-hdp", "hdp"] {
        let mut cfg = RunConfig::default();
        cfg.set("model", model)?;
        cfg.iters = iters;
        cfg.burnin = iters * 2 / 5;
        cfg.seed = seed;
        let m = cfg.model(&seq.observations)?;
        let data = Prepared::new(&m, seq.observations.clone())?;
        let out = run_chain(&m, &data, cfg.chain_settings(), RngStream::new(seed, 1))?;
        let s = evaluate(&out.modal, &seq.labels);
        let last = out.trace.last().expect("at least one sweep");
        println!(
            "{model:<7} accuracy {:.3}  weighted F1 {:.3}  switches {:>5}  states {}",
            s.accuracy, s.weighted_f1, s.n_switches, last.n_states_used
        );
    }
    Ok(())
}
