//! Decides extractability for a few bundled sources and prints the evidence.
//!
//! Run with `cargo run --example analyze_source`.

use std::path::PathBuf;

use svx::adversary::build_g_certificate;
use svx::extractor::{self, Status};
use svx::io;
use svx::model::SourceSpec;
use svx::spread::{spread_constant, SpreadOptions};

fn load(name: &str) -> SourceSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    io::parse_source_spec(&io::read_bytes(&path).expect("bundled data"), false).expect("valid spec")
}

fn main() {
    for name in ["three_symbol.json", "binary_third.json", "simplex_spanning.json"] {
        let spec = load(name);
        let v = extractor::verdict(&spec);
        println!("{name}: {:?} (exit code {})", v.status, v.status.exit_code());
        match v.status {
            Status::Extractable => {
                let w = v.witness.expect("extractable verdicts carry ψ");
                println!("  psi = {:?}, max |E_s psi| = {:.1e}", w.values(), w.max_abs_mean());
            }
            Status::Impossible => {
                let dice: Vec<Vec<f64>> = spec.dice().iter().map(|d| d.probs().to_vec()).collect();
                let opts = SpreadOptions {
                    samples: 20_000,
                    ..Default::default()
                };
                if let Ok(delta) = spread_constant(&dice, &opts) {
                    println!("  spread constant = {:.6} ({:?})", delta.value, delta.method);
                }
                if let Some(cert) = build_g_certificate(&spec) {
                    println!("  g certificate keeps every pair {:.6} from (1/2, 1/2)", cert.separation_margin());
                }
            }
            Status::Gap => println!("  {}", v.note),
        }
    }
}
