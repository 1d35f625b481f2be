//! Rounds a randomized agreement protocol to a deterministic one and reports how
//! much disagreement and bias the rounding costs.
//!
//! Run with `cargo run --example derandomize`.

use svx::distributed::derandomize;

fn main() {
    // Bob sees Alice's symbol through a channel that flips it to its partner 10% of the time
    let a = 4;
    let joint: Vec<Vec<f64>> = (0..a)
        .map(|x| (0..a).map(|y| if x == y { 0.9 / a as f64 } else if x ^ 1 == y { 0.1 / a as f64 } else { 0.0 }).collect())
        .collect();
    // each party leans toward the bit x >> 1 but keeps some private randomness
    let alice: Vec<f64> = (0..a).map(|x| if x < 2 { 0.8 } else { 0.2 }).collect();
    let bob: Vec<f64> = (0..a).map(|y| if y < 2 { 0.75 } else { 0.3 }).collect();

    let out = derandomize(&joint, &alice, &bob).unwrap();
    println!("randomized: disagreement {:.4}, biases {:.4} / {:.4}", out.disagreement, out.bias_alice, out.bias_bob);
    println!("rounded:    disagreement {:.4}, biases {:.4} / {:.4}", out.rounded_disagreement, out.rounded_bias_alice, out.rounded_bias_bob);
    println!("Alice's bits {:?}, Bob's bits {:?}, bounds hold: {}", out.alice, out.bob, out.bounds_hold());
}
