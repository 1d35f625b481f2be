//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use svx::distributed;
use svx::io;
use svx::model::{JointSourceSpec, SourceSpec};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn load_source(name: &str) -> SourceSpec {
    io::parse_source_spec(&io::read_bytes(&data(name)).unwrap(), false).unwrap()
}

pub fn load_joint(name: &str) -> JointSourceSpec {
    io::parse_joint_spec(&io::read_bytes(&data(name)).unwrap()).unwrap()
}

pub fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = svx::cli::run(std::iter::once("svx").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

pub fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Numerical rank of the dice differences, via SVD.
pub fn difference_rank(dice: &[Vec<f64>]) -> usize {
    let k = dice[0].len();
    if dice.len() < 2 {
        return 0;
    }
    let m = DMatrix::from_fn(dice.len() - 1, k, |i, j| dice[i + 1][j] - dice[0][j]);
    m.singular_values().iter().filter(|&&s| s > 1e-9).count()
}

/// `(mean, variance)` of `psi` under `die`, computed directly.
pub fn moments(die: &[f64], psi: &[f64]) -> (f64, f64) {
    let mean: f64 = die.iter().zip(psi).map(|(p, x)| p * x).sum();
    let second: f64 = die.iter().zip(psi).map(|(p, x)| p * x * x).sum();
    (mean, second - mean * mean)
}

pub fn random_die(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// `Σ x_i (1−δ)^i (δ/(1−δ))^{s(i)}` with `s(i)` the ones among `x_1 … x_{i−1}`.
pub fn base_delta_oracle(bits: &[u8], delta: &BigRational) -> BigRational {
    let q = BigRational::one() - delta;
    let r = delta / &q;
    let mut total = BigRational::zero();
    let mut ones = 0i32;
    for (i, &b) in bits.iter().enumerate() {
        if b == 1 {
            let mut term = q.clone();
            for _ in 0..i {
                term *= &q;
            }
            for _ in 0..ones {
                term *= &r;
            }
            total += term;
            ones += 1;
        }
    }
    total
}

/// Leaf probabilities of every deterministic strategy on the binary source of depth `n`.
///
/// A strategy assigns a die to each of the `2^n − 1` internal nodes (heap order).
pub fn strategy_leaf_probs(delta: &BigRational, n: usize) -> Vec<Vec<BigRational>> {
    let q = BigRational::one() - delta;
    let dice = [[delta.clone(), q.clone()], [q, delta.clone()]];
    let internal = (1usize << n) - 1;
    (0..1u64 << internal)
        .map(|strategy| {
            (0..1usize << n)
                .map(|leaf| {
                    let mut node = 0usize;
                    let mut p = BigRational::one();
                    for t in 0..n {
                        let symbol = leaf >> (n - 1 - t) & 1;
                        let die = (strategy >> node & 1) as usize;
                        p *= &dice[die][symbol];
                        node = 2 * node + 1 + symbol;
                    }
                    p
                })
                .collect()
        })
        .collect()
}

/// `max_{‖X‖=1, E X = 0} ‖E[X | B]‖` over a grid of directions with golden-section refinement.
pub fn rho_oracle(joint: &[Vec<f64>]) -> f64 {
    let (pa, pb) = distributed::marginals(joint);
    let ka = pa.len();
    // orthonormal basis of zero-mean functions of A in L2(pa)
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let ip = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).zip(&pa).map(|((a, b), p)| a * b * p).sum() };
    let ones = vec![1.0; ka];
    for e in 0..ka {
        let mut v: Vec<f64> = (0..ka).map(|i| f64::from(u8::from(i == e))).collect();
        let c = ip(&v, &ones);
        v.iter_mut().for_each(|x| *x -= c);
        for b in &basis {
            let c = ip(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = ip(&v, &v).sqrt();
        if norm > 1e-9 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let value = |x: &[f64]| -> f64 {
        // ‖E[X|B]‖² = Σ_b (Σ_a p(a,b) x(a))² / p(b)
        (0..pb.len())
            .filter(|&b| pb[b] > 0.0)
            .map(|b| {
                let s: f64 = (0..ka).map(|a| joint[a][b] * x[a]).sum();
                s * s / pb[b]
            })
            .sum::<f64>()
            .sqrt()
    };
    let at = |theta: f64| -> f64 {
        let x: Vec<f64> = (0..ka)
            .map(|i| basis[0][i] * theta.cos() + basis.get(1).map_or(0.0, |b| b[i]) * theta.sin())
            .collect();
        value(&x)
    };
    match basis.len() {
        0 => 0.0,
        1 => value(&basis[0]),
        2 => {
            let steps = 3600;
            let h = std::f64::consts::PI / steps as f64;
            let best = (0..steps)
                .map(|i| i as f64 * h)
                .max_by(|a, b| at(*a).total_cmp(&at(*b)))
                .unwrap();
            let (mut lo, mut hi) = (best - h, best + h);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                if at(m1) < at(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            at((lo + hi) / 2.0)
        }
        _ => panic!("oracle handles |A| ≤ 3"),
    }
}
