//! The spread constant `Δ` of a family of dice.
//!
//! For `X` in the span of the die differences (the orthogonal complement of
//! the functions with die-independent mean, under the uniform inner product),
//! `h(X) = max_{s,s'} E_s[X] − E_{s'}[X]` is a norm. `Δ` is its minimum on the
//! unit sphere `‖X‖_* = 1`, equivalently `1 / max { ‖X‖_* : h(X) ≤ 1 }`. The
//! maximum of a norm over a polytope sits at a vertex, so small instances are
//! solved exactly by enumerating vertices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{self, orthonormal_basis};
use crate::model::trial_rng;

/// Largest vertex-candidate count solved by enumeration.
pub const VERTEX_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpreadError {
    #[error("all dice have the same mean for every function, so Δ is undefined")]
    Trivial,
    #[error("dice have inconsistent lengths")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMethod {
    /// One-dimensional sphere; `Δ` is a closed-form maximum.
    ClosedForm,
    /// Exact up to rounding: every vertex of the dual polytope was visited.
    VertexEnumeration,
    /// Projected subgradient descent; an upper approximation of the true minimum.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub value: f64,
    pub method: DeltaMethod,
    /// Dimension of the sphere's ambient subspace.
    pub dimension: usize,
    /// Smallest `h` seen over random sphere samples; `value` never exceeds it.
    pub sample_min: Option<f64>,
    pub samples: usize,
    /// A unit-norm function attaining `value`.
    pub minimizer: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpreadOptions {
    pub samples: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SpreadOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            restarts: 64,
            seed: 0,
        }
    }
}

struct Problem {
    /// Orthonormal basis of the difference span, uniform inner product.
    basis: Vec<Vec<f64>>,
    /// `a[k][j] = (p_s − p_{s'}) · basis[j]` for the k-th pair.
    a: Vec<Vec<f64>>,
}

impl Problem {
    fn new(dice: &[Vec<f64>]) -> Result<Self, SpreadError> {
        let k = dice.first().map_or(0, Vec::len);
        if dice.iter().any(|d| d.len() != k) {
            return Err(SpreadError::Shape);
        }
        let weights = vec![1.0 / k as f64; k];
        let diffs: Vec<Vec<f64>> = dice
            .iter()
            .skip(1)
            .map(|d| d.iter().zip(&dice[0]).map(|(x, y)| x - y).collect())
            .collect();
        let span_rank = linalg::rank(&diffs);
        let mut basis = orthonormal_basis(&diffs, &weights, 1e-9);
        basis.truncate(span_rank);
        if basis.is_empty() {
            return Err(SpreadError::Trivial);
        }
        let mut a = Vec::new();
        for s in 0..dice.len() {
            for t in s + 1..dice.len() {
                let g: Vec<f64> = dice[s].iter().zip(&dice[t]).map(|(x, y)| x - y).collect();
                let row: Vec<f64> = basis.iter().map(|b| linalg::dot(&g, b)).collect();
                if row.iter().any(|x| *x != 0.0) {
                    a.push(row);
                }
            }
        }
        Ok(Self { basis, a })
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn h(&self, w: &[f64]) -> f64 {
        self.a
            .iter()
            .map(|row| linalg::dot(row, w).abs())
            .fold(0.0, f64::max)
    }

    fn lift(&self, w: &[f64]) -> Vec<f64> {
        let k = self.basis[0].len();
        let mut x = vec![0.0; k];
        for (wj, b) in w.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += wj * bi;
            }
        }
        x
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Visits every `d`-subset of constraint rows and every sign pattern; returns the
/// feasible vertex of largest norm.
fn enumerate_vertices(p: &Problem) -> Vec<f64> {
    let d = p.dim();
    let rows = p.a.len();
    let mut best = (0.0, vec![0.0; d]);
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let m = DMatrix::from_fn(d, d, |i, j| p.a[idx[i]][j]);
        if let Some(lu) = Some(m.lu()).filter(|lu| lu.is_invertible()) {
            for mask in 0..1u64 << (d - 1) {
                let rhs = DVector::from_fn(d, |i, _| {
                    if i > 0 && mask >> (i - 1) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                });
                let Some(w) = lu.solve(&rhs) else { continue };
                let w: Vec<f64> = w.iter().copied().collect();
                if p.h(&w) <= 1.0 + 1e-9 {
                    let norm = linalg::dot(&w, &w).sqrt();
                    if norm > best.0 {
                        best = (norm, w);
                    }
                }
            }
        }
        // next combination in lexicographic order
        let mut i = d;
        loop {
            if i == 0 {
                return best.1;
            }
            i -= 1;
            if idx[i] < rows - d + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..d {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        // Box-Muller normals give a uniform direction
        let w: Vec<f64> = (0..d)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let n = linalg::dot(&w, &w).sqrt();
        if n > 1e-12 {
            return w.into_iter().map(|x| x / n).collect();
        }
    }
}

fn descend(p: &Problem, mut w: Vec<f64>) -> (f64, Vec<f64>) {
    let mut step = 0.1;
    let mut best = (p.h(&w), w.clone());
    while step > 1e-10 {
        let (mut k, mut peak, mut sign) = (0, -1.0, 1.0);
        for (i, row) in p.a.iter().enumerate() {
            let v = linalg::dot(row, &w);
            if v.abs() > peak {
                (k, peak, sign) = (i, v.abs(), v.signum());
            }
        }
        let g = &p.a[k];
        let radial = linalg::dot(g, &w);
        let mut next: Vec<f64> = w
            .iter()
            .zip(g)
            .map(|(wi, gi)| wi - step * sign * (gi - radial * wi))
            .collect();
        let n = linalg::dot(&next, &next).sqrt();
        next.iter_mut().for_each(|x| *x /= n);
        let hv = p.h(&next);
        if hv < best.0 {
            best = (hv, next.clone());
            w = next;
        } else {
            step *= 0.5;
        }
    }
    best
}

fn sample_min(p: &Problem, opts: &SpreadOptions) -> (f64, Vec<f64>) {
    const CHUNK: usize = 4096;
    let chunks = opts.samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(opts.seed ^ 0x5eed_5eed, c as u64);
            let count = CHUNK.min(opts.samples - c * CHUNK);
            let mut best = (f64::INFINITY, Vec::new());
            for _ in 0..count {
                let w = random_unit(p.dim(), &mut rng);
                let hv = p.h(&w);
                if hv < best.0 {
                    best = (hv, w);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, Vec::new()),
            |a, b| if b.0 < a.0 { b } else { a },
        )
}

/// `Δ` for the given dice.
pub fn spread_constant(dice: &[Vec<f64>], opts: &SpreadOptions) -> Result<DeltaEstimate, SpreadError> {
    let p = Problem::new(dice)?;
    let d = p.dim();
    let (value, w, method) = if d == 1 {
        let w = vec![1.0];
        (p.h(&w), w, DeltaMethod::ClosedForm)
    } else {
        let candidates = binomial(p.a.len() as u64, d as u64).saturating_mul(1 << (d - 1).min(62));
        if candidates <= VERTEX_BUDGET {
            let v = enumerate_vertices(&p);
            let norm = linalg::dot(&v, &v).sqrt();
            let w: Vec<f64> = v.iter().map(|x| x / norm).collect();
            (p.h(&w), w, DeltaMethod::VertexEnumeration)
        } else {
            let mut rng = trial_rng(opts.seed, u64::MAX);
            let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
                .map(|_| random_unit(d, &mut rng))
                .collect();
            let (v, w) = starts
                .into_par_iter()
                .map(|s| descend(&p, s))
                .reduce(|| (f64::INFINITY, Vec::new()), |a, b| if b.0 < a.0 { b } else { a });
            (v, w, DeltaMethod::Numerical)
        }
    };
    let (sample_min, value, w) = if opts.samples > 0 {
        let (sm, sw) = sample_min(&p, opts);
        if sm < value {
            (Some(sm), sm, sw)
        } else {
            (Some(sm), value, w)
        }
    } else {
        (None, value, w)
    };
    Ok(DeltaEstimate {
        value,
        method,
        dimension: d,
        sample_min,
        samples: opts.samples,
        minimizer: p.lift(&w),
    })
}

/// `max_{s,s'} E_s[x] − E_{s'}[x]`.
pub fn max_mean_gap(dice: &[Vec<f64>], x: &[f64]) -> f64 {
    let means: Vec<f64> = dice.iter().map(|d| linalg::dot(d, x)).collect();
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// `‖x‖_*`, the norm under the uniform distribution.
pub fn uniform_norm(x: &[f64]) -> f64 {
    (linalg::dot(x, x) / x.len() as f64).sqrt()
}
