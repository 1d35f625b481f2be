//! Maximal correlation, its tensorization, and the common part of a joint distribution.
//!
//! Run with `cargo run --example maximal_correlation`.

use svx::distributed::{common_part, maximal_correlation, tensor};

fn dsbs(e: f64) -> Vec<Vec<f64>> {
    vec![vec![(1.0 - e) / 2.0, e / 2.0], vec![e / 2.0, (1.0 - e) / 2.0]]
}

fn main() {
    let p = dsbs(0.1);
    let r = maximal_correlation(&p).unwrap();
    println!("DSBS(0.1): rho = {:.6}, witness f = {:?}", r.rho, r.witness_x.unwrap());

    let q = vec![vec![0.3, 0.1, 0.0], vec![0.1, 0.2, 0.3]];
    let rq = maximal_correlation(&q).unwrap().rho;
    let rpq = maximal_correlation(&tensor(&p, &q)).unwrap().rho;
    println!("rho(Q) = {rq:.6}, rho(P ⊗ Q) = {rpq:.6} = max(rho(P), rho(Q))");

    // two blocks: the block index is a common bit both sides see
    let blocks = vec![
        vec![0.1, 0.0, 0.0, 0.0],
        vec![0.1, 0.2, 0.0, 0.0],
        vec![0.0, 0.0, 0.1, 0.1],
        vec![0.0, 0.0, 0.2, 0.2],
    ];
    let part = common_part(&[&blocks]).unwrap();
    println!(
        "block joint: rho = {:.6}, components of A = {:?}, of B = {:?}",
        maximal_correlation(&blocks).unwrap().rho,
        part.component_of_a,
        part.component_of_b
    );
}
