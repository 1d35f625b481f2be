//! Exact theory of the classic two-dice binary source `p_0(0) = δ, p_1(0) = 1 − δ`.
//!
//! `(0.x_1…x_n)_δ = Σ x_i (1−δ)^i (δ/(1−δ))^{s_x(i)}` with `s_x(i) = Σ_{j<i} x_j`.
//! For the extractor whose zero-set is the first `x` leaves, `β` equals
//! `(0.bin(x))_δ` and `α` equals `(0.bin(x))_{1−δ}`.

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{alpha_beta_with, AlphaBeta};
use crate::model::{ExtractorTable, ModelError};
use crate::scalar::{rational_to_string, Field};

pub const MAX_CURVE_DEPTH: usize = 20;
pub const MAX_PREFIX_DEPTH: usize = 4;
pub const MAX_ADDITION_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinarySvError {
    #[error("δ must lie in {range}, got {value}")]
    Delta { value: f64, range: &'static str },
    #[error("depth {n} exceeds the limit of {limit}")]
    Depth { n: usize, limit: usize },
    #[error("x = {x} is outside 0..=2^{n}")]
    Range { x: u64, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Bits `x_1 … x_n` with a base `δ ∈ (0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDeltaString<T> {
    bits: Vec<u8>,
    delta: T,
}

impl<T: Field> BaseDeltaString<T> {
    pub fn new(bits: Vec<u8>, delta: T) -> Result<Self, BinarySvError> {
        if !(delta > T::zero() && delta < T::one()) {
            return Err(BinarySvError::Delta {
                value: delta.to_f64(),
                range: "(0, 1)",
            });
        }
        Ok(Self { bits, delta })
    }

    pub fn value(&self) -> T {
        base_delta(&self.bits, &self.delta)
    }
}

/// `(0.x_1…x_n)_δ`; the caller guarantees `0 < δ < 1`.
pub fn base_delta<T: Field>(bits: &[u8], delta: &T) -> T {
    let q = T::one() - delta.clone();
    let r = delta.clone() / q.clone();
    let mut weight = q.clone();
    let mut total = T::zero();
    for &b in bits {
        if b != 0 {
            total = total + weight.clone();
            weight = weight * r.clone();
        }
        weight = weight * q.clone();
    }
    total
}

/// The `n` binary digits of `x`, most significant first.
pub fn bits_of(x: u64, n: usize) -> Vec<u8> {
    (0..n).rev().map(|i| (x >> i & 1) as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub beta: f64,
}

fn check_curve_delta(delta: f64) -> Result<(), BinarySvError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(BinarySvError::Delta {
            value: delta,
            range: "(0, 1/2)",
        });
    }
    Ok(())
}

/// `{((0.x)_{1−δ}, (0.x)_δ) : |x| ≤ n_max} ∪ {(1, 1)}`, deduplicated and sorted by `α`.
pub fn f_delta_curve(delta: f64, n_max: usize) -> Result<Vec<CurvePoint>, BinarySvError> {
    check_curve_delta(delta)?;
    if n_max > MAX_CURVE_DEPTH {
        return Err(BinarySvError::Depth {
            n: n_max,
            limit: MAX_CURVE_DEPTH,
        });
    }
    // per string: (α, β, weight at base 1−δ, weight at base δ)
    let (qa, ra) = (delta, (1.0 - delta) / delta);
    let (qb, rb) = (1.0 - delta, delta / (1.0 - delta));
    let mut frontier = vec![(0.0_f64, 0.0_f64, qa, qb)];
    let mut points = vec![CurvePoint { alpha: 0.0, beta: 0.0 }];
    for _ in 0..n_max {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &(a, b, wa, wb) in &frontier {
            next.push((a, b, wa * qa, wb * qb));
            next.push((a + wa, b + wb, wa * ra * qa, wb * rb * qb));
        }
        points.extend(next.iter().map(|&(alpha, beta, _, _)| CurvePoint { alpha, beta }));
        frontier = next;
    }
    points.push(CurvePoint { alpha: 1.0, beta: 1.0 });
    points.sort_by(|p, q| p.alpha.total_cmp(&q.alpha).then(p.beta.total_cmp(&q.beta)));
    points.dedup();
    Ok(points)
}

/// `min` over the points of `max(|α − ½|, |β − ½|)`.
pub fn curve_gap(points: &[CurvePoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.alpha - 0.5).abs().max((p.beta - 0.5).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Zero-set = the first `x` of the `2^n` leaves.
pub fn left_prefix_table(n: usize, x: u64) -> Result<ExtractorTable, BinarySvError> {
    let len = crate::model::count_within_budget(2, n, crate::model::DEFAULT_BUDGET)?;
    if x > len as u64 {
        return Err(BinarySvError::Range { x, n });
    }
    let labels = (0..len as u64).map(|i| u8::from(i >= x)).collect();
    Ok(ExtractorTable::new(2, n, labels)?)
}

fn binary_dice<T: Field>(delta: &T) -> Vec<Vec<T>> {
    let q = T::one() - delta.clone();
    vec![vec![delta.clone(), q.clone()], vec![q, delta.clone()]]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixReport {
    pub holds: bool,
    pub subsets_checked: u64,
    /// Subsets with `β` below the bound, as label strings.
    pub below_bound: Vec<String>,
    /// Sizes `x` where the left prefix missed equality.
    pub prefix_mismatch: Vec<u64>,
}

/// Exhaustively checks `β(I) ≥ (0.bin(|I|))_δ` with equality on left prefixes.
pub fn verify_prefix_optimality(delta: &BigRational, n: usize) -> Result<PrefixReport, BinarySvError> {
    if !(*delta > BigRational::from_ratio(0, 1) && *delta < BigRational::from_ratio(1, 1)) {
        return Err(BinarySvError::Delta {
            value: delta.to_f64(),
            range: "(0, 1)",
        });
    }
    if n > MAX_PREFIX_DEPTH {
        return Err(BinarySvError::Depth {
            n,
            limit: MAX_PREFIX_DEPTH,
        });
    }
    let dice = binary_dice(delta);
    let leaves = 1usize << n;
    let bounds: Vec<BigRational> = (0..=leaves as u64)
        .map(|x| {
            if x == leaves as u64 {
                BigRational::from_ratio(1, 1)
            } else {
                base_delta(&bits_of(x, n), delta)
            }
        })
        .collect();
    let below: Vec<String> = (0..1u64 << leaves)
        .into_par_iter()
        .filter_map(|mask| {
            let t = ExtractorTable::from_subset_mask(2, n, mask).expect("n ≤ 4");
            let beta = crate::adversary::solve(&dice, &t, crate::adversary::Objective::Max).0;
            (beta < bounds[t.zero_count()]).then(|| t.labels_string())
        })
        .collect();
    let mismatch: Vec<u64> = (0..=leaves as u64)
        .filter(|&x| {
            let t = left_prefix_table(n, x).expect("x in range");
            alpha_beta_with(&dice, &t).beta != bounds[x as usize]
        })
        .collect();
    Ok(PrefixReport {
        holds: below.is_empty() && mismatch.is_empty(),
        subsets_checked: 1 << leaves,
        below_bound: below,
        prefix_mismatch: mismatch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdditionForm {
    /// `(0.x)_δ + δ/(1−δ)·(0.y)_δ ≥ (0.z)_δ` with `x + y = z` on `n` bits.
    Plain,
    /// `(1−δ)(0.x)_δ + δ(0.y)_δ ≥ (0.z)_δ` with `z = x + y` on `n + 1` bits.
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub form: AdditionForm,
    pub delta: String,
    pub n: usize,
    pub x: u64,
    pub y: u64,
    pub z: u64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditionReport {
    pub holds: bool,
    pub triples_checked: u64,
    pub counterexample_count: u64,
    /// First failure per δ, in grid order.
    pub counterexamples: Vec<Counterexample>,
}

/// The grid `δ ∈ {0.05, 0.10, …, 0.95}` as exact fractions.
pub fn delta_grid() -> Vec<BigRational> {
    (1..20).map(|k| BigRational::from_ratio(k, 20)).collect()
}

/// Checks both forms of the base-δ addition inequality for every `n ≤ n_max` and every grid δ.
pub fn verify_addition_inequality(n_max: usize) -> Result<AdditionReport, BinarySvError> {
    verify_addition_inequality_on(n_max, &delta_grid())
}

pub fn verify_addition_inequality_on(
    n_max: usize,
    deltas: &[BigRational],
) -> Result<AdditionReport, BinarySvError> {
    if n_max > MAX_ADDITION_DEPTH {
        return Err(BinarySvError::Depth {
            n: n_max,
            limit: MAX_ADDITION_DEPTH,
        });
    }
    let per_delta: Vec<(u64, u64, Option<Counterexample>)> = deltas
        .par_iter()
        .map(|delta| addition_for_delta(n_max, delta))
        .collect();
    let triples_checked = per_delta.iter().map(|r| r.0).sum();
    let counterexample_count = per_delta.iter().map(|r| r.1).sum();
    let counterexamples: Vec<Counterexample> =
        per_delta.into_iter().filter_map(|r| r.2).collect();
    Ok(AdditionReport {
        holds: counterexample_count == 0,
        triples_checked,
        counterexample_count,
        counterexamples,
    })
}

fn addition_for_delta(n_max: usize, delta: &BigRational) -> (u64, u64, Option<Counterexample>) {
    let one = BigRational::from_ratio(1, 1);
    let q = one - delta.clone();
    let r = delta.clone() / q.clone();
    let table = |n: usize| -> Vec<BigRational> {
        (0..1u64 << n).map(|x| base_delta(&bits_of(x, n), delta)).collect()
    };
    let (mut checked, mut failed, mut first) = (0u64, 0u64, None);
    let mut record = |form, n, x, y, z, lhs: &BigRational, rhs: &BigRational| {
        checked += 1;
        if lhs < rhs {
            failed += 1;
            first.get_or_insert(Counterexample {
                form,
                delta: rational_to_string(delta),
                n,
                x,
                y,
                z,
                lhs: lhs.to_f64(),
                rhs: rhs.to_f64(),
            });
        }
    };
    let mut current = table(0);
    for n in 0..=n_max {
        let next = table(n + 1);
        if n >= 1 {
            for x in 0..1u64 << n {
                for y in 0..=x {
                    let z = x + y;
                    if z < 1 << n {
                        let lhs = current[x as usize].clone() + r.clone() * current[y as usize].clone();
                        record(AdditionForm::Plain, n, x, y, z, &lhs, &current[z as usize]);
                    }
                    let lhs = q.clone() * current[x as usize].clone() + delta.clone() * current[y as usize].clone();
                    record(AdditionForm::Shifted, n, x, y, z, &lhs, &next[z as usize]);
                }
            }
        }
        current = next;
    }
    (checked, failed, first)
}

/// `a` dominates `b` when `a.α ≤ b.α` and `a.β ≥ b.β`.
pub fn dominates(a: &CurvePoint, b: &CurvePoint, tol: f64) -> bool {
    a.alpha <= b.alpha + tol && a.beta >= b.beta - tol
}

/// Points not dominated by any other point, sorted by `α`.
pub fn domination_frontier(points: &[CurvePoint]) -> Vec<CurvePoint> {
    let mut sorted = points.to_vec();
    // ascending α, and for equal α the largest β first
    sorted.sort_by(|p, q| p.alpha.total_cmp(&q.alpha).then(q.beta.total_cmp(&p.beta)));
    let mut out: Vec<CurvePoint> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|last| p.beta > last.beta) {
            out.push(p);
        }
    }
    out
}

/// Whether `p` dominates some point of `curve`, i.e. lies on or above the curve.
///
/// For a fixed number of zero-leaves the left prefix maximizes `α` and minimizes `β`,
/// so every achievable pair dominates the curve pair of its prefix.
pub fn above_curve(p: &CurvePoint, curve: &[CurvePoint], tol: f64) -> bool {
    curve.iter().any(|f| dominates(p, f, tol))
}

pub fn all_above_curve(cloud: &[CurvePoint], curve: &[CurvePoint], tol: f64) -> bool {
    let mut sorted = curve.to_vec();
    sorted.sort_by(|p, q| p.alpha.total_cmp(&q.alpha));
    // suffix_min[i] = smallest β among curve points with index ≥ i
    let mut suffix_min = vec![f64::INFINITY; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        suffix_min[i] = suffix_min[i + 1].min(sorted[i].beta);
    }
    cloud.iter().all(|p| {
        let i = sorted.partition_point(|f| f.alpha < p.alpha - tol);
        suffix_min[i] <= p.beta + tol
    })
}

impl From<&AlphaBeta<f64>> for CurvePoint {
    fn from(ab: &AlphaBeta<f64>) -> Self {
        CurvePoint {
            alpha: ab.alpha,
            beta: ab.beta,
        }
    }
}
