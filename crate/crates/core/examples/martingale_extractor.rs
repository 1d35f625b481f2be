//! Runs the martingale extractor against an adaptive adversary and compares the bit
//! frequency with the guaranteed bias bracket.
//!
//! Run with `cargo run --release --example martingale_extractor`.

use std::path::PathBuf;

use svx::extractor::{bias_bracket, extract_bit, find_psi, AdaptiveSign, MartingaleConfig};
use svx::io;
use svx::model::SourceStream;
use svx::montecarlo::{binomial_sigma, run_trials, summarize};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/three_symbol.json");
    let spec = io::parse_source_spec(&io::read_bytes(&path).unwrap(), false).unwrap();
    let psi = find_psi(&spec).expect("three_symbol is extractable");

    let n = 100_000;
    let cfg = MartingaleConfig::with_default_threshold(n).unwrap();
    let bracket = bias_bracket(&cfg, &psi).unwrap();
    println!("block length {n}, threshold M = {}", cfg.threshold());
    println!("bracket [{:.4}, {:.4}], tail {:.4}", bracket.lo, bracket.hi, bracket.tail);

    let trials = 2000;
    let traces = run_trials(7, trials, |_, rng| {
        let mut adv = AdaptiveSign::new(&spec, psi.values(), Some(n));
        let mut stream = SourceStream::new(&spec, &mut adv, rng);
        extract_bit(&psi, &cfg, &mut stream).unwrap()
    });
    let ones = traces.iter().filter(|t| t.bit == 1).count() as f64 / trials as f64;
    let y: Vec<f64> = traces.iter().map(|t| t.y_tau).collect();
    let stopped = traces.iter().filter(|t| t.tau < n).count();
    println!(
        "Pr[bit = 1] = {ones:.4} ± {:.4}, inside bracket: {}",
        binomial_sigma(ones, trials),
        bracket.contains(ones)
    );
    println!("E[Y_tau] = {:.3} ± {:.3}, {stopped}/{trials} walks hit the threshold", summarize(&y).mean, summarize(&y).sigma_mean());
}
