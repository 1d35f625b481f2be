//! Builds the lower curve for a binary source and checks that every table's
//! achievable pair lies above it. The curve is written as CSV to stdout.
//!
//! Run with `cargo run --example lower_curve > curve.csv`.

use std::path::PathBuf;

use svx::adversary::phi_set;
use svx::binary_sv::{all_above_curve, curve_gap, f_delta_curve, CurvePoint};
use svx::io;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/binary_third.json");
    let spec = io::parse_source_spec(&io::read_bytes(&path).unwrap(), false).unwrap();
    let delta = 1.0 / 3.0;

    let curve = f_delta_curve(delta, 8).unwrap();
    eprintln!("{} curve points, distance from (1/2, 1/2): {:.6}", curve.len(), curve_gap(&curve));
    for n in 1..=3 {
        let cloud: Vec<CurvePoint> = phi_set(&spec, n)
            .unwrap()
            .points
            .iter()
            .map(|p| CurvePoint { alpha: p.alpha, beta: p.beta })
            .collect();
        eprintln!("n = {n}: {} pairs, all above the curve: {}", cloud.len(), all_above_curve(&cloud, &curve, 1e-12));
    }
    io::write_curve_csv(&curve, std::io::stdout().lock()).unwrap();
}
