//! Decides whether two parties observing a correlated adversarial source can agree on
//! an unbiased bit, then runs the common extractor on an extractable source.
//!
//! Run with `cargo run --release --example distributed_pipeline`.

use std::path::PathBuf;

use svx::distributed::{common_adaptive_adversary, common_extract_with, distributed_verdict};
use svx::extractor::MartingaleConfig;
use svx::io;
use svx::model::{trial_rng, JointSourceSpec};

fn load(name: &str) -> JointSourceSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    io::parse_joint_spec(&io::read_bytes(&path).unwrap()).unwrap()
}

fn main() {
    for name in ["dsbs_01.json", "erasure.json", "common_bit.json", "composite_extractable.json"] {
        let report = distributed_verdict(&load(name)).unwrap();
        println!("{name}: {:?}, {:?}", report.status, report.reason);
    }

    let jspec = load("composite_extractable.json");
    let report = distributed_verdict(&jspec).unwrap();
    let n = 1000;
    let cfg = MartingaleConfig::with_default_threshold(n).unwrap();
    let mut adv = common_adaptive_adversary(&jspec, &report, n).unwrap();
    let k = 200;
    let out = common_extract_with(&jspec, &report, &cfg, &mut adv, k, trial_rng(1, 0)).unwrap();
    let ones = out.alice.iter().filter(|t| t.bit == 1).count();
    println!("{k} bits against the adaptive adversary: agreement {}, ones {ones}", out.agreement);
}
