//! Computes the adversary's best and worst zero-probability for a table, the strategy
//! that attains it, and a tilted strategy that biases a product-measure extractor.
//!
//! Run with `cargo run --example adversary_dp`.

use std::path::PathBuf;

use svx::adversary::{self, optimal_strategy, phi_set, randomized_zero_probability, tilt_adversary, Objective};
use svx::io;
use svx::model::ExtractorTable;
use svx::scalar::rational_to_string;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/binary_third.json");
    let spec = io::parse_source_spec(&io::read_bytes(&path).unwrap(), false).unwrap();

    // majority of three bits
    let table = ExtractorTable::new(2, 3, vec![0, 0, 0, 1, 0, 1, 1, 1]).unwrap();
    let exact = adversary::alpha_beta_exact(&spec, &table).unwrap();
    println!(
        "table {}: alpha = {}, beta = {}",
        table.labels_string(),
        rational_to_string(&exact.alpha),
        rational_to_string(&exact.beta)
    );
    let low = optimal_strategy(&spec, &table, Objective::Min).unwrap();
    println!("minimizing die after 0: {}, after 1: {}", low.choice(&[0]), low.choice(&[1]));

    let phi = phi_set(&spec, 3).unwrap();
    let closest = phi
        .points
        .iter()
        .map(|p| (p.alpha - 0.5).abs().max((p.beta - 0.5).abs()))
        .fold(f64::INFINITY, f64::min);
    println!("{} distinct pairs at depth 3; the closest is {closest:.4} from (1/2, 1/2)", phi.points.len());

    let out = tilt_adversary(&spec, &table, &[0.5, 0.5], 0.1).unwrap();
    let target = if out.favored_bit == 0 { table.clone() } else { table.complement() };
    println!(
        "tilting toward bit {}: core mass {:.4}, achieved {:.4} (replayed {:.4})",
        out.favored_bit,
        out.core_mass,
        out.achieved,
        randomized_zero_probability(&spec, &out.strategy, &target)
    );
}
